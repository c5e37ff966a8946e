use filpost::cli::synth_stream;
use filpost::records::*;
use filpost::vtk::write_hazard_vtk;
use filpost::weibull::*;
use vtkio::model::{Attribute, DataSet, Piece};
use vtkio::Vtk;

struct Mesh {
    nodes: NodeTable,
    elements: ElementTable,
    hazard: HazardMap,
}

fn synth_mesh(n: usize) -> Mesh {
    let s = synth_stream(n, 11);
    let nodes = extract_nodes(&s).unwrap();
    let elements = extract_elements(&s).unwrap();
    let field = field_from_results(1.0, &nodes, &elements, &extract_stresses(&s).unwrap()).unwrap();
    let params = WeibullParams::new(5.0, 4.0, 40.0, 1.0).unwrap();
    let hazard = hazard_map(&field, &params);
    Mesh {
        nodes,
        elements,
        hazard,
    }
}

fn hex_mesh() -> Mesh {
    let corners = [
        [0., 0., 0.],
        [1., 0., 0.],
        [1., 1., 0.],
        [0., 1., 0.],
        [0., 0., 1.],
        [1., 0., 1.],
        [1., 1., 1.],
        [0., 1., 1.],
    ];
    let nodes = NodeTable {
        rows: corners
            .iter()
            .enumerate()
            .map(|(i, c)| NodeRow {
                node_id: 10 + i as i64,
                coords: c.to_vec(),
            })
            .collect(),
    };
    let elements = ElementTable {
        rows: vec![ElementRow {
            element_id: 7,
            element_type: "C3D8".into(),
            connectivity: (10..18).collect(),
        }],
    };
    let field = ElementField::with_ids(1.0, vec![7], vec![120.0], vec![1.0]).unwrap();
    let hazard = hazard_map(&field, &WeibullParams::new(100.0, 2.0, 10.0, 1.0).unwrap());
    Mesh {
        nodes,
        elements,
        hazard,
    }
}

fn render(m: &Mesh) -> String {
    let mut buf = Vec::new();
    write_hazard_vtk(&mut buf, &m.nodes, &m.elements, &m.hazard).unwrap();
    String::from_utf8(buf).unwrap()
}

struct Cursor<'a> {
    tokens: Vec<&'a str>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn next(&mut self) -> &'a str {
        self.pos += 1;
        self.tokens.get(self.pos - 1).expect("truncated file")
    }

    fn number<T: std::str::FromStr>(&mut self) -> T {
        let t = self.next();
        t.parse()
            .unwrap_or_else(|_| panic!("expected a number, got {t:?}"))
    }

    fn done(&self) -> bool {
        self.pos == self.tokens.len()
    }
}

/// Walks the legacy ASCII unstructured-grid grammar and returns
/// (points, cells, cell scalar arrays).
fn check_grammar(text: &str) -> (usize, usize, Vec<(String, Vec<f64>)>) {
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# vtk DataFile Version 3.0");
    assert!(!lines[1].is_empty() && lines[1].len() <= 256);
    assert_eq!(lines[2], "ASCII");
    assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
    let mut c = Cursor {
        tokens: lines[4..]
            .iter()
            .flat_map(|l| l.split_whitespace())
            .collect(),
        pos: 0,
    };
    assert_eq!(c.next(), "POINTS");
    let np: usize = c.number();
    assert!(["float", "double"].contains(&c.next()));
    for _ in 0..3 * np {
        c.number::<f64>();
    }
    assert_eq!(c.next(), "CELLS");
    let nc: usize = c.number();
    let size: usize = c.number();
    let mut used = 0;
    for _ in 0..nc {
        let k: usize = c.number();
        used += k + 1;
        for _ in 0..k {
            assert!(c.number::<usize>() < np);
        }
    }
    assert_eq!(used, size);
    assert_eq!(c.next(), "CELL_TYPES");
    assert_eq!(c.number::<usize>(), nc);
    for _ in 0..nc {
        assert!((1..=42).contains(&c.number::<u32>()));
    }
    assert_eq!(c.next(), "CELL_DATA");
    assert_eq!(c.number::<usize>(), nc);
    let mut arrays = Vec::new();
    while !c.done() {
        assert_eq!(c.next(), "SCALARS");
        let name = c.next().to_string();
        assert!(["float", "double"].contains(&c.next()));
        let mut t = c.next();
        if t == "1" {
            t = c.next();
        }
        assert_eq!(t, "LOOKUP_TABLE");
        assert_eq!(c.next(), "default");
        arrays.push((name, (0..nc).map(|_| c.number()).collect()));
    }
    (np, nc, arrays)
}

#[test]
fn quad_mesh_follows_grammar() {
    let m = synth_mesh(16);
    let (np, nc, arrays) = check_grammar(&render(&m));
    assert_eq!((np, nc), (16, 9));
    assert_eq!(arrays.len(), 2);
    assert_eq!(arrays[0].0, "failure_probability");
    assert_eq!(arrays[1].0, "log10_failure_probability");
    for (i, p) in m.hazard.probability.iter().enumerate() {
        assert_eq!(arrays[0].1[i], *p);
        assert_eq!(arrays[1].1[i], m.hazard.log10_probability[i]);
    }
}

#[test]
fn quad_mesh_loads_in_vtkio() {
    let m = synth_mesh(25);
    let vtk = Vtk::parse_legacy_be(render(&m).as_bytes()).unwrap();
    let DataSet::UnstructuredGrid { pieces, .. } = vtk.data else {
        panic!("not an unstructured grid")
    };
    let Piece::Inline(piece) = &pieces[0] else {
        panic!("no inline piece")
    };
    assert_eq!(piece.num_points(), 25);
    assert_eq!(piece.cells.num_cells(), 16);
    assert!(piece.cells.types.iter().all(|t| *t as u8 == 9));
    let names: Vec<_> = piece
        .data
        .cell
        .iter()
        .map(|a| match a {
            Attribute::DataArray(d) => d.name.clone(),
            Attribute::Field { name, .. } => name.clone(),
        })
        .collect();
    assert_eq!(names, ["failure_probability", "log10_failure_probability"]);
    let Attribute::DataArray(p) = &piece.data.cell[0] else {
        unreachable!()
    };
    let values: Vec<f64> = p.data.clone().cast_into().unwrap();
    assert_eq!(values, m.hazard.probability);
}

#[test]
fn hexahedron_loads_in_vtkio() {
    let m = hex_mesh();
    let text = render(&m);
    let (np, nc, arrays) = check_grammar(&text);
    assert_eq!((np, nc), (8, 1));
    // (120 - 100) / 10 = 2
    assert_eq!(arrays[0].1[0], m.hazard.probability[0]);
    assert!((m.hazard.probability[0] - (1.0 - (-4f64).exp())).abs() < 1e-15);
    let vtk = Vtk::parse_legacy_be(text.as_bytes()).unwrap();
    let DataSet::UnstructuredGrid { pieces, .. } = vtk.data else {
        panic!()
    };
    let Piece::Inline(piece) = &pieces[0] else {
        panic!()
    };
    assert_eq!(piece.cells.types[0] as u8, 12);
}

#[test]
fn single_element_hazard_equals_global_probability() {
    let params = WeibullParams::new(900.0, 4.0, 1200.0, 1.0).unwrap();
    let field = ElementField::new(1.0, vec![1750.0], vec![1.0]).unwrap();
    let map = hazard_map(&field, &params);
    let global = failure_probability(weibull_stress(&field, &params), &params).unwrap();
    assert_eq!(map.probability[0], global);
}
