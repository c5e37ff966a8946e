//! Typed extraction of specific record keys.
//!
//! Each extractor scans a decoded [`FilStream`] for one record key and turns
//! the attribute lists into a table. The `to_records` methods go the other
//! way and are used to synthesize fixtures.

use std::io::{self, Write};

use indexmap::IndexMap;
use log::warn;
use thiserror::Error;

use crate::codec::{CodecError, DataItem, FilStream, LogicalRecord};
use crate::format::sig6;

pub const ELEMENT_HEADER_KEY: i64 = 1;
pub const STRESS_KEY: i64 = 11;
pub const DISPLACEMENT_KEY: i64 = 101;
pub const REACTION_FORCE_KEY: i64 = 104;
pub const ELEMENT_KEY: i64 = 1900;
pub const NODE_KEY: i64 = 1901;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("malformed key-{key} record #{index}: {reason}")]
    MalformedRecord {
        key: i64,
        index: usize,
        reason: String,
    },
    #[error("stress record #{index} has no preceding element header")]
    OrphanStressRecord { index: usize },
    #[error("key {0} is not a nodal field key (expected 101 or 104)")]
    UnsupportedKey(i64),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

fn malformed(key: i64, index: usize, reason: impl Into<String>) -> RecordError {
    RecordError::MalformedRecord {
        key,
        index,
        reason: reason.into(),
    }
}

/// Number rendering for CSV export.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    /// Shortest text that parses back to the same `f64`.
    Full,
    /// Six significant digits.
    Sig6,
}

impl Precision {
    fn render(self, v: f64) -> String {
        match self {
            Precision::Full => format!("{v:?}"),
            Precision::Sig6 => sig6(v),
        }
    }
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn floats_of(
    key: i64,
    index: usize,
    items: &[DataItem],
    what: &str,
) -> Result<Vec<f64>, RecordError> {
    items
        .iter()
        .map(|item| {
            item.as_float()
                .ok_or_else(|| malformed(key, index, format!("{what} item {item} is not a real")))
        })
        .collect()
}

fn leading_int(key: i64, index: usize, attrs: &[DataItem], what: &str) -> Result<i64, RecordError> {
    match attrs.first() {
        Some(DataItem::Int(v)) => Ok(*v),
        Some(other) => Err(malformed(
            key,
            index,
            format!("{what} {other} is not an integer"),
        )),
        None => Err(malformed(key, index, format!("missing {what}"))),
    }
}

fn record(key: i64, attributes: Vec<DataItem>) -> LogicalRecord {
    LogicalRecord::new(key, attributes).expect("registry keys are non-negative")
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeRow {
    pub node_id: i64,
    pub coords: Vec<f64>,
}

/// Nodal coordinates (key 1901).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeTable {
    pub rows: Vec<NodeRow>,
}

impl NodeTable {
    /// Coordinate dimension, `None` for an empty table.
    pub fn dimension(&self) -> Option<usize> {
        self.rows.first().map(|r| r.coords.len())
    }

    pub fn get(&self, node_id: i64) -> Option<&NodeRow> {
        self.rows.iter().find(|r| r.node_id == node_id)
    }

    pub fn to_records(&self) -> Vec<LogicalRecord> {
        self.rows
            .iter()
            .map(|r| {
                let mut attrs = vec![DataItem::Int(r.node_id)];
                attrs.extend(r.coords.iter().map(|&c| DataItem::Float(c)));
                record(NODE_KEY, attrs)
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W, precision: Precision) -> io::Result<()> {
        let d = self.dimension().unwrap_or(0);
        let mut header = vec!["node_id".to_string()];
        header.extend(["x", "y", "z"].iter().take(d).map(|s| s.to_string()));
        writeln!(w, "{}", header.join(","))?;
        for row in &self.rows {
            let mut cells = vec![row.node_id.to_string()];
            cells.extend(row.coords.iter().map(|&c| precision.render(c)));
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// One row per key-1901 record: `[Int node_id, Float coord...]`. Duplicate
/// node ids keep their first position but take the last record's values.
pub fn extract_nodes(stream: &FilStream) -> Result<NodeTable, RecordError> {
    let mut rows: IndexMap<i64, Vec<f64>> = IndexMap::new();
    let mut dimension = None;
    for (index, rec) in stream.with_key(NODE_KEY).enumerate() {
        let attrs = rec.attributes();
        let node_id = leading_int(NODE_KEY, index, attrs, "node id")?;
        let coords = floats_of(NODE_KEY, index, &attrs[1..], "coordinate")?;
        if !(1..=3).contains(&coords.len()) {
            return Err(malformed(
                NODE_KEY,
                index,
                format!("{} coordinates, expected 1 to 3", coords.len()),
            ));
        }
        match dimension {
            None => dimension = Some(coords.len()),
            Some(d) if d != coords.len() => {
                return Err(malformed(
                    NODE_KEY,
                    index,
                    format!("{} coordinates in a {d}-dimensional table", coords.len()),
                ))
            }
            _ => {}
        }
        if rows.insert(node_id, coords).is_some() {
            warn!("node {node_id} redefined by record #{index}; keeping the later definition");
        }
    }
    Ok(NodeTable {
        rows: rows
            .into_iter()
            .map(|(node_id, coords)| NodeRow { node_id, coords })
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementRow {
    pub element_id: i64,
    /// Element type label with trailing blanks removed.
    pub element_type: String,
    pub connectivity: Vec<i64>,
}

/// Element connectivity (key 1900).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ElementTable {
    pub rows: Vec<ElementRow>,
}

impl ElementTable {
    pub fn to_records(&self) -> Result<Vec<LogicalRecord>, RecordError> {
        self.rows
            .iter()
            .map(|r| {
                let mut attrs = vec![
                    DataItem::Int(r.element_id),
                    DataItem::str8(&r.element_type)?,
                ];
                attrs.extend(r.connectivity.iter().map(|&n| DataItem::Int(n)));
                Ok(record(ELEMENT_KEY, attrs))
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "element_id,element_type,connectivity")?;
        for row in &self.rows {
            let conn: Vec<String> = row.connectivity.iter().map(i64::to_string).collect();
            writeln!(
                w,
                "{},{},{}",
                row.element_id,
                csv_field(&row.element_type),
                conn.join(" ")
            )?;
        }
        Ok(())
    }
}

/// One row per key-1900 record: `[Int element_id, Str8 type, Int node...]`.
pub fn extract_elements(stream: &FilStream) -> Result<ElementTable, RecordError> {
    let mut rows: IndexMap<i64, ElementRow> = IndexMap::new();
    for (index, rec) in stream.with_key(ELEMENT_KEY).enumerate() {
        let attrs = rec.attributes();
        let element_id = leading_int(ELEMENT_KEY, index, attrs, "element id")?;
        let element_type = attrs
            .get(1)
            .and_then(DataItem::as_text)
            .ok_or_else(|| malformed(ELEMENT_KEY, index, "missing element type label"))?
            .trim_end()
            .to_string();
        let connectivity = attrs[2..]
            .iter()
            .map(|item| match item {
                DataItem::Int(n) if *n >= 1 => Ok(*n),
                other => Err(malformed(
                    ELEMENT_KEY,
                    index,
                    format!("connectivity item {other} is not a node id >= 1"),
                )),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let row = ElementRow {
            element_id,
            element_type,
            connectivity,
        };
        if rows.insert(element_id, row).is_some() {
            warn!(
                "element {element_id} redefined by record #{index}; keeping the later definition"
            );
        }
    }
    Ok(ElementTable {
        rows: rows.into_values().collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodalRow {
    pub node_id: i64,
    pub components: Vec<f64>,
}

/// Nodal output such as displacements (101) or reaction forces (104).
#[derive(Clone, Debug, PartialEq)]
pub struct NodalFieldTable {
    pub key: i64,
    pub rows: Vec<NodalRow>,
}

impl NodalFieldTable {
    pub fn to_records(&self) -> Vec<LogicalRecord> {
        self.rows
            .iter()
            .map(|r| {
                let mut attrs = vec![DataItem::Int(r.node_id)];
                attrs.extend(r.components.iter().map(|&c| DataItem::Float(c)));
                record(self.key, attrs)
            })
            .collect()
    }

    /// Largest absolute value of component `column` over all rows.
    pub fn max_abs(&self, column: usize) -> Option<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.components.get(column))
            .map(|v| v.abs())
            .reduce(f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, precision: Precision) -> io::Result<()> {
        let prefix = if self.key == REACTION_FORCE_KEY {
            "rf"
        } else {
            "u"
        };
        let n = self.rows.first().map_or(0, |r| r.components.len());
        let mut header = vec!["node_id".to_string()];
        header.extend((1..=n).map(|i| format!("{prefix}{i}")));
        writeln!(w, "{}", header.join(","))?;
        for row in &self.rows {
            let mut cells = vec![row.node_id.to_string()];
            cells.extend(row.components.iter().map(|&c| precision.render(c)));
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// One row per record of `key` (101 or 104), in stream order.
pub fn extract_nodal_field(stream: &FilStream, key: i64) -> Result<NodalFieldTable, RecordError> {
    if key != DISPLACEMENT_KEY && key != REACTION_FORCE_KEY {
        return Err(RecordError::UnsupportedKey(key));
    }
    let mut rows = Vec::new();
    let mut width = None;
    for (index, rec) in stream.with_key(key).enumerate() {
        let attrs = rec.attributes();
        let node_id = leading_int(key, index, attrs, "node id")?;
        let components = floats_of(key, index, &attrs[1..], "component")?;
        match width {
            None => width = Some(components.len()),
            Some(n) if n != components.len() => {
                return Err(malformed(
                    key,
                    index,
                    format!("{} components, previous records had {n}", components.len()),
                ))
            }
            _ => {}
        }
        rows.push(NodalRow {
            node_id,
            components,
        });
    }
    Ok(NodalFieldTable { key, rows })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StressRow {
    pub element_id: i64,
    pub integration_point: i64,
    /// `S11, S22, S33, S12[, S13, S23]`.
    pub components: Vec<f64>,
}

/// Integration-point stresses (key 11 joined with key-1 element headers).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StressTable {
    pub rows: Vec<StressRow>,
}

impl StressTable {
    /// Emits a key-1 header before every key-11 record.
    pub fn to_records(&self) -> Vec<LogicalRecord> {
        self.rows
            .iter()
            .flat_map(|r| {
                [
                    record(
                        ELEMENT_HEADER_KEY,
                        vec![
                            DataItem::Int(r.element_id),
                            DataItem::Int(r.integration_point),
                        ],
                    ),
                    record(
                        STRESS_KEY,
                        r.components.iter().map(|&s| DataItem::Float(s)).collect(),
                    ),
                ]
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W, precision: Precision) -> io::Result<()> {
        let names = ["S11", "S22", "S33", "S12", "S13", "S23"];
        let n = self.rows.first().map_or(4, |r| r.components.len());
        writeln!(w, "element_id,integration_point,{}", names[..n].join(","))?;
        for row in &self.rows {
            let mut cells = vec![
                row.element_id.to_string(),
                row.integration_point.to_string(),
            ];
            cells.extend(row.components.iter().map(|&c| precision.render(c)));
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Joins each key-11 record with the most recent key-1 header.
pub fn extract_stresses(stream: &FilStream) -> Result<StressTable, RecordError> {
    let mut current: Option<(i64, i64)> = None;
    let mut rows = Vec::new();
    let mut header_index = 0;
    let mut stress_index = 0;
    for rec in &stream.records {
        match rec.key() {
            ELEMENT_HEADER_KEY => {
                let attrs = rec.attributes();
                let element_id =
                    leading_int(ELEMENT_HEADER_KEY, header_index, attrs, "element id")?;
                let point = match attrs.get(1) {
                    Some(DataItem::Int(p)) if *p >= 1 => *p,
                    other => {
                        return Err(malformed(
                            ELEMENT_HEADER_KEY,
                            header_index,
                            format!("integration point {other:?} is not an integer >= 1"),
                        ))
                    }
                };
                current = Some((element_id, point));
                header_index += 1;
            }
            STRESS_KEY => {
                let (element_id, integration_point) =
                    current.ok_or(RecordError::OrphanStressRecord {
                        index: stress_index,
                    })?;
                let components = floats_of(STRESS_KEY, stress_index, rec.attributes(), "stress")?;
                if components.len() != 4 && components.len() != 6 {
                    return Err(malformed(
                        STRESS_KEY,
                        stress_index,
                        format!("{} stress components, expected 4 or 6", components.len()),
                    ));
                }
                rows.push(StressRow {
                    element_id,
                    integration_point,
                    components,
                });
                stress_index += 1;
            }
            _ => {}
        }
    }
    Ok(StressTable { rows })
}

/// Raw attribute lists of every record with `key`, in stream order.
pub fn extract_raw(stream: &FilStream, key: i64) -> Vec<Vec<DataItem>> {
    stream
        .with_key(key)
        .map(|r| r.attributes().to_vec())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{decode_stream, encode_flat};

    fn roundtrip(records: Vec<LogicalRecord>) -> FilStream {
        decode_stream(&encode_flat(&FilStream::new(records))).unwrap()
    }

    #[test]
    fn node_record_round_trip() {
        let s = roundtrip(vec![record(
            NODE_KEY,
            vec![DataItem::Int(5), DataItem::Float(1.0), DataItem::Float(2.0)],
        )]);
        let t = extract_nodes(&s).unwrap();
        assert_eq!(
            t.rows,
            vec![NodeRow {
                node_id: 5,
                coords: vec![1.0, 2.0]
            }]
        );
        assert_eq!(t.dimension(), Some(2));
    }

    #[test]
    fn no_node_records_gives_empty_table() {
        let s = roundtrip(vec![record(
            101,
            vec![DataItem::Int(1), DataItem::Float(0.0)],
        )]);
        assert!(extract_nodes(&s).unwrap().rows.is_empty());
        assert!(extract_elements(&s).unwrap().rows.is_empty());
    }

    #[test]
    fn malformed_node_records() {
        let s = roundtrip(vec![record(
            NODE_KEY,
            vec![DataItem::Float(1.0), DataItem::Float(2.0)],
        )]);
        assert!(matches!(
            extract_nodes(&s),
            Err(RecordError::MalformedRecord { .. })
        ));
        let s = roundtrip(vec![record(
            NODE_KEY,
            vec![DataItem::Int(1), DataItem::Int(2)],
        )]);
        assert!(matches!(
            extract_nodes(&s),
            Err(RecordError::MalformedRecord { .. })
        ));
        let s = roundtrip(vec![
            record(NODE_KEY, vec![DataItem::Int(1), DataItem::Float(2.0)]),
            record(
                NODE_KEY,
                vec![DataItem::Int(2), DataItem::Float(2.0), DataItem::Float(1.0)],
            ),
        ]);
        assert!(matches!(
            extract_nodes(&s),
            Err(RecordError::MalformedRecord { index: 1, .. })
        ));
    }

    #[test]
    fn duplicate_node_last_wins() {
        let s = roundtrip(vec![
            record(NODE_KEY, vec![DataItem::Int(1), DataItem::Float(0.0)]),
            record(NODE_KEY, vec![DataItem::Int(2), DataItem::Float(5.0)]),
            record(NODE_KEY, vec![DataItem::Int(1), DataItem::Float(9.0)]),
        ]);
        let t = extract_nodes(&s).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(
            t.rows[0],
            NodeRow {
                node_id: 1,
                coords: vec![9.0]
            }
        );
    }

    #[test]
    fn element_record() {
        let s = roundtrip(vec![
            record(
                ELEMENT_KEY,
                vec![
                    DataItem::Int(1),
                    DataItem::str8("CPE8R").unwrap(),
                    DataItem::Int(1),
                    DataItem::Int(2),
                    DataItem::Int(3),
                    DataItem::Int(4),
                ],
            ),
            record(NODE_KEY, vec![DataItem::Int(1), DataItem::Float(0.0)]),
        ]);
        let t = extract_elements(&s).unwrap();
        assert_eq!(
            t.rows,
            vec![ElementRow {
                element_id: 1,
                element_type: "CPE8R".into(),
                connectivity: vec![1, 2, 3, 4]
            }]
        );
        let bad = roundtrip(vec![record(
            ELEMENT_KEY,
            vec![
                DataItem::Int(1),
                DataItem::str8("T2D2").unwrap(),
                DataItem::Int(0),
            ],
        )]);
        assert!(extract_elements(&bad).is_err());
    }

    #[test]
    fn displacement_records() {
        let s = roundtrip(vec![record(
            DISPLACEMENT_KEY,
            vec![
                DataItem::Int(2),
                DataItem::Float(0.0),
                DataItem::Float(-0.0508),
            ],
        )]);
        let t = extract_nodal_field(&s, DISPLACEMENT_KEY).unwrap();
        assert_eq!(
            t.rows,
            vec![NodalRow {
                node_id: 2,
                components: vec![0.0, -0.0508]
            }]
        );
        assert!(extract_nodal_field(&s, REACTION_FORCE_KEY)
            .unwrap()
            .rows
            .is_empty());
        assert!(matches!(
            extract_nodal_field(&s, 7),
            Err(RecordError::UnsupportedKey(7))
        ));
        assert_eq!(t.max_abs(1), Some(0.0508));
    }

    #[test]
    fn stresses_join_headers() {
        let s = roundtrip(vec![
            record(ELEMENT_HEADER_KEY, vec![DataItem::Int(7), DataItem::Int(1)]),
            record(
                STRESS_KEY,
                vec![
                    DataItem::Float(1.0),
                    DataItem::Float(2.0),
                    DataItem::Float(3.0),
                    DataItem::Float(4.0),
                ],
            ),
            record(ELEMENT_HEADER_KEY, vec![DataItem::Int(8), DataItem::Int(2)]),
            record(
                STRESS_KEY,
                vec![
                    DataItem::Float(5.0),
                    DataItem::Float(6.0),
                    DataItem::Float(7.0),
                    DataItem::Float(8.0),
                ],
            ),
        ]);
        let t = extract_stresses(&s).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!((t.rows[0].element_id, t.rows[0].integration_point), (7, 1));
        assert_eq!((t.rows[1].element_id, t.rows[1].integration_point), (8, 2));
        assert_eq!(t.rows[1].components, vec![5.0, 6.0, 7.0, 8.0]);
        assert_eq!(roundtrip(t.to_records()), s);
    }

    #[test]
    fn orphan_stress() {
        let s = roundtrip(vec![
            record(STRESS_KEY, vec![DataItem::Float(1.0); 4]),
            record(ELEMENT_HEADER_KEY, vec![DataItem::Int(7), DataItem::Int(1)]),
        ]);
        assert!(matches!(
            extract_stresses(&s),
            Err(RecordError::OrphanStressRecord { index: 0 })
        ));
    }

    #[test]
    fn raw_extraction() {
        let s = roundtrip(vec![
            record(1922, vec![DataItem::str8("HEADING").unwrap()]),
            record(1922, vec![DataItem::Int(3)]),
            record(2000, vec![]),
        ]);
        let raw = extract_raw(&s, 1922);
        assert_eq!(raw.len(), 2);
        assert_eq!(raw[1], vec![DataItem::Int(3)]);
        assert!(extract_raw(&s, 55).is_empty());
    }

    #[test]
    fn csv_headers() {
        let t = NodeTable {
            rows: vec![NodeRow {
                node_id: 3,
                coords: vec![0.5, 1.0 / 3.0],
            }],
        };
        let mut out = Vec::new();
        t.write_csv(&mut out, Precision::Sig6).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "node_id,x,y\n3,0.5,0.333333\n"
        );
        let mut out = Vec::new();
        t.write_csv(&mut out, Precision::Full).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "node_id,x,y\n3,0.5,0.3333333333333333\n"
        );
    }
}
