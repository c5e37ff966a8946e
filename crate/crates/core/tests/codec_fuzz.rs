use filpost::codec::*;
use filpost::records::*;
use proptest::collection::{btree_set, vec};
use proptest::prelude::*;

/// Value that survives one encode/decode cycle unchanged.
fn canonical(v: f64) -> f64 {
    let text = DataItem::Float(v).encode();
    decode_item(&text, 0).unwrap().0.as_float().unwrap()
}

fn float() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => any::<f64>().prop_filter("finite", |v| v.is_finite()),
        2 => -1e6f64..1e6,
        1 => Just(0.0),
        1 => (-320i32..300, -9.99f64..9.99).prop_map(|(e, m)| m * 10f64.powi(e)),
    ]
    .prop_map(canonical)
}

fn item() -> impl Strategy<Value = DataItem> {
    prop_oneof![
        any::<i64>().prop_map(DataItem::Int),
        float().prop_map(DataItem::Float),
        "[ -~]{0,8}".prop_map(|s| DataItem::str8(&s).unwrap()),
    ]
}

fn stream() -> impl Strategy<Value = FilStream> {
    vec((0i64..100_000, vec(item(), 0..=50)), 0..12).prop_map(|recs| {
        FilStream::new(
            recs.into_iter()
                .map(|(k, a)| LogicalRecord::new(k, a).unwrap())
                .collect(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn file_round_trip(s in stream()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.fil");
        write_fil(&path, &s).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        prop_assert!(text.lines().all(|l| l.len() <= LINE_WIDTH));
        let decoded = decode_stream(&fil_to_string(&path).unwrap()).unwrap();
        prop_assert_eq!(decoded, s);
    }

    #[test]
    fn item_round_trip(i in item()) {
        let text = i.encode();
        let (back, used) = decode_item(&text, 0).unwrap();
        prop_assert_eq!(used, text.len());
        prop_assert_eq!(back, i);
    }

    #[test]
    fn nodes_and_fields_survive_the_registry(
        ids in btree_set(1i64..1_000_000, 1..40),
        xy in vec((float(), float()), 40),
        u in vec((float(), float()), 40),
    ) {
        let nodes = NodeTable {
            rows: ids.iter().zip(&xy).map(|(&id, &(x, y))| NodeRow { node_id: id, coords: vec![x, y] }).collect(),
        };
        let disp = NodalFieldTable {
            key: DISPLACEMENT_KEY,
            rows: ids.iter().zip(&u).map(|(&id, &(a, b))| NodalRow { node_id: id, components: vec![a, b] }).collect(),
        };
        let mut recs = nodes.to_records();
        recs.extend(disp.to_records());
        let stream = decode_stream(&encode_flat(&FilStream::new(recs))).unwrap();
        prop_assert_eq!(extract_nodes(&stream).unwrap(), nodes);
        prop_assert_eq!(extract_nodal_field(&stream, DISPLACEMENT_KEY).unwrap(), disp);
    }

    #[test]
    fn elements_survive_the_registry(
        ids in btree_set(1i64..100_000, 1..20),
        label in "[A-Z][A-Z0-9]{1,7}",
        conn in vec(1i64..1000, 4),
    ) {
        let table = ElementTable {
            rows: ids.iter().map(|&id| ElementRow { element_id: id, element_type: label.clone(), connectivity: conn.clone() }).collect(),
        };
        let stream = decode_stream(&encode_flat(&FilStream::new(table.to_records().unwrap()))).unwrap();
        prop_assert_eq!(extract_elements(&stream).unwrap(), table);
    }
}

#[test]
fn node_search_key_item() {
    let (item, used) = decode_item("I 41901", 0).unwrap();
    assert_eq!(item, DataItem::Int(1901));
    assert_eq!(used, 7);
    assert_eq!(DataItem::Int(1901).encode(), "I 41901");
}

#[test]
fn truncated_streams_are_rejected() {
    let s = FilStream::new(vec![LogicalRecord::new(
        1901,
        vec![DataItem::Int(1), DataItem::Float(0.5)],
    )
    .unwrap()]);
    let flat = encode_flat(&s);
    for cut in 1..flat.len() {
        assert!(
            decode_stream(&flat[..cut]).is_err(),
            "prefix {cut} accepted"
        );
    }
}
