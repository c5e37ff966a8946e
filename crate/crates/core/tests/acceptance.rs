//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fail.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use filpost::codec::*;
use filpost::czm::*;
use filpost::jobs::*;
use filpost::records::*;
use filpost::truss::*;
use filpost::vtk::write_hazard_vtk;
use filpost::weibull::*;
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    check(t < limit, || format!("took {t:?}, limit {limit:?}"))
}

fn canonical(v: f64) -> f64 {
    decode_item(&DataItem::Float(v).encode(), 0)
        .unwrap()
        .0
        .as_float()
        .unwrap()
}

fn codec_round_trip() -> Outcome {
    let start = Instant::now();
    let item = prop_oneof![
        any::<i64>().prop_map(DataItem::Int),
        any::<f64>()
            .prop_filter("finite", |v| v.is_finite())
            .prop_map(|v| DataItem::Float(canonical(v))),
        "[ -~]{0,8}".prop_map(|s| DataItem::str8(&s).unwrap()),
    ];
    let stream = vec((0i64..100_000, vec(item, 0..=50)), 0..12).prop_map(|recs| {
        FilStream::new(
            recs.into_iter()
                .map(|(k, a)| LogicalRecord::new(k, a).unwrap())
                .collect(),
        )
    });
    let config = Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("fuzz.fil");
    runner
        .run(&stream, |s| {
            write_fil(&path, &s).unwrap();
            let back = decode_stream(&fil_to_string(&path).unwrap()).unwrap();
            prop_assert_eq!(back, s);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    within_time(start, Duration::from_secs(10))?;
    Ok(format!("1000 streams exact in {:.2?}", start.elapsed()))
}

fn data_item_anchor() -> Outcome {
    let (item, used) = decode_item("I 41901", 0).map_err(|e| e.to_string())?;
    check(item == DataItem::Int(1901) && used == 7, || {
        format!("{item:?}, {used} chars")
    })?;
    Ok("I 41901 -> 1901, width 4".into())
}

fn rounded_problem() -> TrussProblem {
    TrussProblem {
        youngs_modulus: 68.948e9,
        rho: 2767.99,
        length: 9.144,
        load: 444.974e3,
        d_max: 0.0508,
        sigma_max: 172.369e6,
        area_bounds: [0.00365, 0.02258],
    }
}

fn truss_optimum() -> Outcome {
    let start = Instant::now();
    let p = rounded_problem();
    let opt = optimize_truss(
        &p,
        [0.0037, 0.0049],
        &OptimizeOptions::default(),
        &mut AnalyticTruss,
    )
    .map_err(|e| e.to_string())?;
    let [a1, a2] = opt.state.areas;
    let w = opt.state.weight;
    check(rel(a1, 0.00365) <= 0.01 && rel(a2, 0.00482) <= 0.01, || {
        format!("areas [{a1}, {a2}]")
    })?;
    check(rel(w, 2598.7) <= 0.005, || format!("weight {w}"))?;

    // independent closed-form sweep over the box
    let (e, l, load, d) = (p.youngs_modulus, p.length, p.load, p.d_max);
    let lb = p.area_bounds[0].max(2f64.sqrt() * load / p.sigma_max);
    let ub = p.area_bounds[1];
    let mut lightest = f64::INFINITY;
    for i in 0..200 {
        for j in 0..200 {
            let b1 = lb + (ub - lb) * i as f64 / 199.0;
            let b2 = lb + (ub - lb) * j as f64 / 199.0;
            let uy = load * l / e * (1.0 / b1 + 2.0 * 2f64.sqrt() / b2);
            let ux = load * l / (e * b1);
            if uy <= d && ux <= d {
                lightest = lightest.min(9.81 * p.rho * l * (b1 + 2f64.sqrt() * b2));
            }
        }
    }
    check(lightest >= w * (1.0 - 0.002), || {
        format!("grid finds {lightest} below {w}")
    })?;
    within_time(start, Duration::from_secs(30))?;
    Ok(format!(
        "A = [{a1:.6}, {a2:.6}], W = {w:.2} N, lightest grid design {lightest:.2} N"
    ))
}

fn truss_activity() -> Outcome {
    let p = rounded_problem();
    let s = solve_truss([0.00365, 0.00482], &p).map_err(|e| e.to_string())?;
    let uy = s.displacements[1].abs();
    // statics: diagonal carries sqrt(2) P
    let sigma2 = s.member_stresses[1].abs();
    check(rel(sigma2, 2f64.sqrt() * p.load / 0.00482) < 1e-12, || {
        format!("sigma2 {sigma2} off statics")
    })?;
    check((uy - 0.0508).abs() <= 1e-4, || format!("|u_y| = {uy}"))?;
    check(sigma2 <= 172.369e6 * 1.001, || {
        format!("|sigma2| = {sigma2}")
    })?;
    Ok(format!(
        "|u_y| = {uy:.6} m, |sigma2| = {:.3} MPa",
        sigma2 / 1e6
    ))
}

fn weibull_point_checks() -> Outcome {
    let p = WeibullParams::new(1000.0, 4.0, 1200.0, 1.0).map_err(|e| e.to_string())?;
    let pf = failure_probability(2200.0, &p).map_err(|e| e.to_string())?;
    let want = 1.0 - (-1f64).exp();
    check((pf - want).abs() <= 1e-12, || format!("P_f = {pf}"))?;
    let field = ElementField::new(1.0, vec![1750.0], vec![1.0]).map_err(|e| e.to_string())?;
    let sw = weibull_stress(&field, &p);
    check(sw == 1750.0, || format!("sigma_w = {sw}"))?;
    Ok(format!("P_f(th + u) = {pf:.15}, sigma_w = sigma1"))
}

fn weibull_recovery() -> Outcome {
    let start = Instant::now();
    let (th, m, u) = (1000.0, 4.0, 1200.0);
    let loads = sampled_loads(0, th, m, u, 200);
    let fit = fit_three_parameter(
        &levels(),
        &rank_failure_loads(&loads),
        1.0,
        &FitOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let got = fit.params;
    let errs = [rel(got.sigma_th, th), rel(got.m, m), rel(got.sigma_u, u)];
    let summary = format!(
        "sigma_th {:.1} ({:+.1}%), m {:.3} ({:+.1}%), sigma_u {:.1} ({:+.1}%)",
        got.sigma_th,
        100.0 * (got.sigma_th / th - 1.0),
        got.m,
        100.0 * (got.m / m - 1.0),
        got.sigma_u,
        100.0 * (got.sigma_u / u - 1.0)
    );
    check(errs.iter().all(|e| *e <= 0.05), || summary.clone())?;
    within_time(start, Duration::from_secs(60))?;
    Ok(summary)
}

fn inverse_identification() -> Outcome {
    let start = Instant::now();
    let target = forward_model(
        &TSLParams::new(200.0, 60.0).unwrap(),
        &ForwardConfig::default(),
    );
    let opts = InverseOptions {
        n_init: 5,
        ..InverseOptions::default()
    };
    let r = inverse_identify(&target, &mut SyntheticModel::default(), &opts)
        .map_err(|e| e.to_string())?;
    check(
        rel(r.params.tc, 200.0) <= 0.02 && rel(r.params.gamma_c, 60.0) <= 0.02,
        || format!("{}", r.params),
    )?;
    check(r.iterations <= 10, || {
        format!("{} iterations", r.iterations)
    })?;
    check(
        r.history.windows(2).all(|w| w[1].verified <= w[0].verified),
        || "mismatch increased".into(),
    )?;
    within_time(start, Duration::from_secs(30))?;
    Ok(format!(
        "{}, outer iterations {}, mismatch {:.2e}",
        r.params, r.iterations, r.mismatch
    ))
}

fn energy_identity() -> Outcome {
    let d = delta_from(199.2, 61.81).map_err(|e| e.to_string())?;
    let g = cohesive_energy(199.2, d).map_err(|e| e.to_string())?;
    check(rel(g, 61.81) <= 1e-12, || format!("Gamma_c = {g}"))?;
    Ok(format!("delta_c = {d:.6} mm, Gamma_c = {g}"))
}

fn job_orchestration() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let planted = [(3i64, [1.25e-3, -4.0625e-2]), (8, [0.0, 7.5e-1])];
    let recs = planted
        .iter()
        .map(|(n, u)| {
            LogicalRecord::new(
                DISPLACEMENT_KEY,
                vec![
                    DataItem::Int(*n),
                    DataItem::Float(u[0]),
                    DataItem::Float(u[1]),
                ],
            )
            .unwrap()
        })
        .collect();
    fs::write(
        dir.path().join("planted.fil"),
        encode_stream(&FilStream::new(recs)),
    )
    .map_err(|e| e.to_string())?;
    let deck = render_input("*HEADING\n@LOAD@\n", &[("@LOAD@", "*CLOAD\n3, 2, -1.0")])
        .map_err(|e| e.to_string())?;
    fs::write(dir.path().join("acc.inp"), deck).map_err(|e| e.to_string())?;
    let mut spec = JobSpec::new(
        "grep -q '^3, 2, -1.0$' {job}.inp || exit 5; touch {job}.lck; sleep 0.2; cp planted.fil {job}.fil; rm {job}.lck",
        "acc",
        dir.path(),
    );
    spec.initial_wait = Duration::from_millis(50);
    spec.poll_interval = Duration::from_millis(20);
    spec.timeout = Duration::from_secs(10);
    let stream = run_job_and_read(&spec).map_err(|e| e.to_string())?;
    let field = extract_nodal_field(&stream, DISPLACEMENT_KEY).map_err(|e| e.to_string())?;
    let exact = field.rows.len() == planted.len()
        && field
            .rows
            .iter()
            .zip(&planted)
            .all(|(r, (n, u))| r.node_id == *n && r.components == u);
    check(exact, || format!("read back {:?}", field.rows))?;

    let mut hang = JobSpec::new("touch {job}.lck; exec sleep 30", "hang", dir.path());
    hang.initial_wait = Duration::from_millis(100);
    hang.poll_interval = Duration::from_millis(100);
    hang.timeout = Duration::from_millis(500);
    let elapsed = match run_job(&hang) {
        Err(JobError::Timeout { elapsed, .. }) => elapsed,
        other => return Err(format!("expected timeout, got {other:?}")),
    };
    check(elapsed <= hang.timeout + hang.poll_interval, || {
        format!("timeout fired after {elapsed:?}")
    })?;
    Ok(format!(
        "planted values exact; timeout after {elapsed:.2?} (limit 600ms)"
    ))
}

fn hazard_export() -> Outcome {
    let p = WeibullParams::new(900.0, 4.0, 1200.0, 1.0).unwrap();
    let field = ElementField::with_ids(1.0, vec![1], vec![1750.0], vec![1.0]).unwrap();
    let map = hazard_map(&field, &p);
    let global = failure_probability(weibull_stress(&field, &p), &p).map_err(|e| e.to_string())?;
    check(map.probability[0] == global, || {
        format!("{} vs {global}", map.probability[0])
    })?;

    let nodes = NodeTable {
        rows: [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
            .iter()
            .enumerate()
            .map(|(i, c)| NodeRow {
                node_id: i as i64 + 1,
                coords: c.to_vec(),
            })
            .collect(),
    };
    let elements = ElementTable {
        rows: vec![ElementRow {
            element_id: 1,
            element_type: "CPE4".into(),
            connectivity: vec![1, 2, 3, 4],
        }],
    };
    let mut buf = Vec::new();
    write_hazard_vtk(&mut buf, &nodes, &elements, &map).map_err(|e| e.to_string())?;
    let text = String::from_utf8(buf).map_err(|e| e.to_string())?;
    let head: Vec<&str> = text.lines().take(4).collect();
    check(
        head[0] == "# vtk DataFile Version 3.0"
            && head[2] == "ASCII"
            && head[3] == "DATASET UNSTRUCTURED_GRID",
        || format!("header {head:?}"),
    )?;
    let vtk = vtkio::Vtk::parse_legacy_be(text.as_bytes())
        .map_err(|e| format!("vtkio rejects file: {e:?}"))?;
    let vtkio::model::DataSet::UnstructuredGrid { pieces, .. } = vtk.data else {
        return Err("not an unstructured grid".into());
    };
    let vtkio::model::Piece::Inline(piece) = &pieces[0] else {
        return Err("no inline piece".into());
    };
    check(
        piece.num_points() == 4 && piece.cells.num_cells() == 1,
        || "wrong mesh size".into(),
    )?;
    Ok(format!(
        "P_f = {global:.6}; legacy VTK parses (4 points, 1 cell)"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("codec round-trip", codec_round_trip),
        ("data-item anchor", data_item_anchor),
        ("truss optimum", truss_optimum),
        ("truss constraint activity", truss_activity),
        ("weibull point checks", weibull_point_checks),
        ("weibull calibration recovery", weibull_recovery),
        ("inverse identification", inverse_identification),
        ("cohesive energy identity", energy_identity),
        ("job orchestration", job_orchestration),
        ("hazard map export", hazard_export),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1)
            }
        }
    }
    println!(
        "{} of {} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
