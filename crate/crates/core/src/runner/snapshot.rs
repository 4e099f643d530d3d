//! Snapshot text files: a `snapshot <t> <degree>` line, the mesh block, then
//! `u <dof> <value>` and `phi <dof> <value>` lines with 17 significant digits.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::chsolver::MixedState;
use crate::error::{Error, Result};
use crate::fespace::{FEFunction, FunctionSpace};
use crate::mesh::Triangulation;

pub fn write_snapshot(state: &MixedState) -> String {
    let space = state.space();
    let mut s = String::new();
    writeln!(s, "snapshot {:.16e} {}", state.t, space.degree()).unwrap();
    space.mesh().write_text(&mut s).unwrap();
    for (name, f) in [("u", &state.u), ("phi", &state.phi)] {
        for (i, v) in f.coeffs().iter().enumerate() {
            writeln!(s, "{name} {i} {v:.16e}").unwrap();
        }
    }
    s
}

/// Parse a snapshot. The mesh is rebuilt with its stored vertex order, so the
/// degrees of freedom come back in the order they were written.
pub fn read_snapshot(text: &str, source_name: &str) -> Result<MixedState> {
    let err = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let lines: Vec<&str> = text.lines().collect();
    let head: Vec<&str> = lines.first().map(|l| l.split_whitespace().collect()).unwrap_or_default();
    if head.len() != 3 || head[0] != "snapshot" {
        return Err(err(1, "expected `snapshot <t> <degree>`".into()));
    }
    let t: f64 = head[1].parse().map_err(|_| err(1, format!("bad time {:?}", head[1])))?;
    let degree: usize = match head[2].parse() {
        Ok(d @ 1..=2) => d,
        _ => return Err(err(1, format!("bad degree {:?}", head[2]))),
    };
    let (mesh, used) = Triangulation::parse_text(&lines[1..], source_name, 2)?;
    let space = FunctionSpace::new(Arc::new(mesh), degree);
    let n = space.ndofs();
    let mut fields = [vec![0.0; n], vec![0.0; n]];
    let mut at = 1 + used;
    for (which, name) in ["u", "phi"].iter().enumerate() {
        for i in 0..n {
            let line = at + 1;
            let f: Vec<&str> = lines
                .get(at)
                .ok_or_else(|| err(line, format!("unexpected end of file, wanted `{name} {i} <value>`")))?
                .split_whitespace()
                .collect();
            let value = (f.len() == 3 && f[0] == *name && f[1].parse::<usize>().ok() == Some(i))
                .then(|| f[2].parse::<f64>().ok())
                .flatten()
                .ok_or_else(|| err(line, format!("expected `{name} {i} <value>`")))?;
            fields[which][i] = value;
            at += 1;
        }
    }
    if let Some(extra) = lines[at..].iter().position(|l| !l.trim().is_empty()) {
        return Err(err(at + extra + 1, "trailing content".into()));
    }
    let [u, phi] = fields;
    MixedState::new(FEFunction::new(space.clone(), u)?, FEFunction::new(space, phi)?, t)
}

/// Legacy VTK ASCII unstructured grid with `u` and `phi` as point data.
/// P2 elements are written as quadratic triangles.
pub fn write_vtk(state: &MixedState) -> String {
    let space = state.space();
    let mesh = space.mesh();
    let coords = space.dof_coords();
    let nb = space.local_dofs();
    let ne = mesh.num_elements();
    let mut s = String::new();
    writeln!(s, "# vtk DataFile Version 3.0\nspinodal t={}\nASCII\nDATASET UNSTRUCTURED_GRID", state.t).unwrap();
    writeln!(s, "POINTS {} double", coords.len()).unwrap();
    for p in coords {
        writeln!(s, "{:.16e} {:.16e} 0", p[0], p[1]).unwrap();
    }
    writeln!(s, "CELLS {} {}", ne, ne * (nb + 1)).unwrap();
    for k in 0..ne {
        let d = space.element_dofs(k);
        if nb == 6 {
            // Local edge i is opposite vertex i; VTK wants midpoints of (0,1), (1,2), (2,0).
            writeln!(s, "6 {} {} {} {} {} {}", d[0], d[1], d[2], d[5], d[3], d[4]).unwrap();
        } else {
            writeln!(s, "3 {} {} {}", d[0], d[1], d[2]).unwrap();
        }
    }
    writeln!(s, "CELL_TYPES {ne}").unwrap();
    let ty = if nb == 6 { 22 } else { 5 };
    for _ in 0..ne {
        writeln!(s, "{ty}").unwrap();
    }
    writeln!(s, "POINT_DATA {}", coords.len()).unwrap();
    for (name, f) in [("u", &state.u), ("phi", &state.phi)] {
        writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for v in f.coeffs() {
            writeln!(s, "{v:.16e}").unwrap();
        }
    }
    s
}
