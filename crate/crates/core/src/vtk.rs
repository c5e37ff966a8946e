//! Legacy VTK export of per-element hazard values.

use std::collections::HashMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::records::{ElementTable, NodeTable};
use crate::weibull::{HazardMap, LOG10_FLOOR};

#[derive(Debug, Error)]
pub enum VtkError {
    #[error("element {element} references unknown node {node}")]
    UnknownNode { element: i64, node: i64 },
    #[error("node table has no uniform dimension")]
    NoDimension,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// VTK cell type for an element label, falling back to the node count.
pub fn cell_type(element_type: &str, nodes: usize) -> u8 {
    let label = element_type.trim().to_ascii_uppercase();
    let by_label = match label.as_str() {
        "CPE3" | "CPS3" | "CAX3" => Some(5),
        "CPE4" | "CPS4" | "CAX4" | "CPE4R" | "CPS4R" | "CAX4R" => Some(9),
        "CPE6" | "CPS6" => Some(22),
        "CPE8" | "CPS8" | "CPE8R" | "CPS8R" | "CAX8" | "CAX8R" => Some(23),
        "C3D4" => Some(10),
        "C3D8" | "C3D8R" => Some(12),
        "C3D20" | "C3D20R" => Some(25),
        "T2D2" | "T3D2" | "B21" | "B31" => Some(3),
        _ => None,
    };
    by_label.unwrap_or(match nodes {
        1 => 1,
        2 => 3,
        3 => 5,
        4 => 9,
        6 => 22,
        8 => 23,
        _ => 7, // polygon
    })
}

/// Writes an `UNSTRUCTURED_GRID` with the failure probability and its
/// base-10 logarithm as cell scalars.
///
/// Elements absent from `hazard` get probability zero. Two-dimensional
/// meshes are written with `z = 0`.
pub fn write_hazard_vtk<W: Write>(
    mut w: W,
    nodes: &NodeTable,
    elements: &ElementTable,
    hazard: &HazardMap,
) -> Result<(), VtkError> {
    let dim = match nodes.dimension() {
        Some(d) => d,
        None if nodes.rows.is_empty() => 3,
        None => return Err(VtkError::NoDimension),
    };
    let index: HashMap<i64, usize> = nodes
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.node_id, i))
        .collect();
    let probability: HashMap<i64, (f64, f64)> = hazard
        .element_ids
        .iter()
        .zip(hazard.probability.iter().zip(&hazard.log10_probability))
        .map(|(&id, (&p, &l))| (id, (p, l)))
        .collect();

    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "local failure probability")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", nodes.rows.len())?;
    for row in &nodes.rows {
        let mut xyz = [0.0; 3];
        xyz[..dim].copy_from_slice(&row.coords[..dim]);
        writeln!(w, "{:e} {:e} {:e}", xyz[0], xyz[1], xyz[2])?;
    }

    let size: usize = elements.rows.iter().map(|e| e.connectivity.len() + 1).sum();
    writeln!(w, "CELLS {} {}", elements.rows.len(), size)?;
    for e in &elements.rows {
        write!(w, "{}", e.connectivity.len())?;
        for node in &e.connectivity {
            let i = index.get(node).ok_or(VtkError::UnknownNode {
                element: e.element_id,
                node: *node,
            })?;
            write!(w, " {i}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {}", elements.rows.len())?;
    for e in &elements.rows {
        writeln!(w, "{}", cell_type(&e.element_type, e.connectivity.len()))?;
    }

    let values: Vec<(f64, f64)> = elements
        .rows
        .iter()
        .map(|e| {
            probability
                .get(&e.element_id)
                .copied()
                .unwrap_or((0.0, LOG10_FLOOR))
        })
        .collect();
    writeln!(w, "CELL_DATA {}", elements.rows.len())?;
    writeln!(w, "SCALARS failure_probability double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for (p, _) in &values {
        writeln!(w, "{p:e}")?;
    }
    writeln!(w, "SCALARS log10_failure_probability double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for (_, l) in &values {
        writeln!(w, "{l:e}")?;
    }
    Ok(())
}

/// `element_id,probability,log10_probability` rows.
pub fn write_hazard_csv<W: Write>(mut w: W, hazard: &HazardMap) -> io::Result<()> {
    writeln!(w, "element_id,probability,log10_probability")?;
    for ((id, p), l) in hazard
        .element_ids
        .iter()
        .zip(&hazard.probability)
        .zip(&hazard.log10_probability)
    {
        writeln!(w, "{id},{p:e},{l:e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_types() {
        assert_eq!(cell_type("CPE4", 4), 9);
        assert_eq!(cell_type("cpe8r ", 8), 23);
        assert_eq!(cell_type("C3D8", 8), 12);
        assert_eq!(cell_type("USER1", 3), 5);
        assert_eq!(cell_type("USER2", 5), 7);
    }
}
