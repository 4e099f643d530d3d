//! Moving finite element functions between snapshots of one refinement forest.

use std::sync::Arc;

use rayon::prelude::*;

use super::function::FEFunction;
use super::space::{barycentric, to_physical, FunctionSpace};
use crate::error::{Error, Result};

/// Where a target element sits relative to the source snapshot.
enum Relation {
    /// Contained in this source element (ancestor or self).
    Inside(usize),
    /// Tiled by these source elements.
    Covered(Vec<usize>),
}

fn relations(source: &FunctionSpace, target: &FunctionSpace) -> Result<Vec<Relation>> {
    let (sm, tm) = (source.mesh(), target.mesh());
    if sm.lineage() != tm.lineage() {
        return Err(Error::Transfer(format!(
            "mesh {} and mesh {} do not share a refinement forest",
            sm.id(),
            tm.id()
        )));
    }
    tm.elements()
        .par_iter()
        .map(|el| {
            if let Some(s) = sm.active_ancestor(el.id) {
                Ok(Relation::Inside(s))
            } else if let Some(d) = sm.active_descendants(el.id) {
                Ok(Relation::Covered(d))
            } else {
                Err(Error::Transfer(format!("element {} of mesh {} is not covered", el.id, tm.id())))
            }
        })
        .collect()
}

/// Transfer `f` onto `target`: nodal interpolation when every target element
/// lies inside a source element (refinement), otherwise `L²` projection.
pub fn transfer(f: &FEFunction, target: &Arc<FunctionSpace>) -> Result<FEFunction> {
    let source = f.space();
    if source.stamp() == target.stamp() && source.degree() == target.degree() {
        return Ok(f.clone());
    }
    let rel = relations(source, target)?;
    if rel.iter().all(|r| matches!(r, Relation::Inside(_))) {
        Ok(interpolate_nested(f, target, &rel))
    } else {
        project(f, target, &rel)
    }
}

fn interpolate_nested(f: &FEFunction, target: &Arc<FunctionSpace>, rel: &[Relation]) -> FEFunction {
    let sm = f.space().mesh();
    let mut coeffs = vec![f64::NAN; target.ndofs()];
    for (k, r) in rel.iter().enumerate() {
        let Relation::Inside(s) = *r else { unreachable!() };
        let ps = sm.coords(s);
        for &d in target.element_dofs(k) {
            if coeffs[d].is_nan() {
                coeffs[d] = f.eval_local(s, barycentric(ps, target.dof_coords()[d]));
            }
        }
    }
    FEFunction::new(target.clone(), coeffs).expect("length matches target space")
}

/// `L²` projection, integrating exactly over the common refinement of both meshes.
fn project(f: &FEFunction, target: &Arc<FunctionSpace>, rel: &[Relation]) -> Result<FEFunction> {
    let sm = f.space().mesh();
    let tm = target.mesh();
    let t = target.table();
    let nb = target.local_dofs();
    let b = super::assembly::assemble_vector(target, |k, out| {
        out.fill(0.0);
        let pk = tm.coords(k);
        let mut phi = [0.0; 6];
        match &rel[k] {
            Relation::Inside(s) => {
                let ps = sm.coords(*s);
                let area = tm.area(k);
                for q in 0..t.rule.len() {
                    let x = to_physical(pk, t.rule.points[q]);
                    let v = f.eval_local(*s, barycentric(ps, x));
                    let w = t.rule.weights[q] * area * v;
                    for a in 0..nb {
                        out[a] += w * t.phi(q)[a];
                    }
                }
            }
            Relation::Covered(leaves) => {
                for &s in leaves {
                    let ps = sm.coords(s);
                    let area = sm.area(s);
                    for q in 0..t.rule.len() {
                        let v = f.eval_local(s, t.rule.points[q]);
                        let x = to_physical(ps, t.rule.points[q]);
                        super::space::basis_values(target.degree(), barycentric(pk, x), &mut phi[..nb]);
                        let w = t.rule.weights[q] * area * v;
                        for a in 0..nb {
                            out[a] += w * phi[a];
                        }
                    }
                }
            }
        }
    });
    let coeffs = target.mass_solve(&b);
    FEFunction::new(target.clone(), coeffs)
}
