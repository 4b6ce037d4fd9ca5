use std::fmt::Write;

use super::{ConvexInstance, Sense};
use crate::energy::EnergyTerm;

/// Plain-text listing of an instance's variables and rows, for debugging.
pub fn dump(inst: &ConvexInstance<'_>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# placement {}", inst.placement);
    if let Some(pinned) = inst.pinned {
        let _ = writeln!(out, "# pinned {pinned:?}");
    }
    if let Some(cert) = &inst.infeasible {
        let _ = writeln!(out, "# infeasible: {cert}");
    }
    let _ = writeln!(out, "vars {}", inst.num_vars());
    for (j, (kind, term)) in inst.vars.iter().zip(&inst.terms).enumerate() {
        let term = match term {
            None => "-".to_string(),
            Some(EnergyTerm::Cubic { coef }) => format!("cubic coef={coef:.6e}"),
            Some(EnergyTerm::Exp2 { scale, rate }) => format!("exp2 scale={scale:.6e} rate={rate:.6e}"),
        };
        let ub = inst.upper_bound(j).map_or(String::new(), |u| format!(" ub={u}"));
        let _ = writeln!(out, "  x{j} {kind} {term}{ub}");
    }
    let _ = writeln!(out, "rows {}", inst.rows.len());
    for row in &inst.rows {
        let sense = match row.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
        };
        let terms: Vec<String> = row.coeffs.iter().map(|(j, a)| format!("{a:+}*x{j}")).collect();
        let _ = writeln!(out, "  {}: {} {sense} {}", row.label, terms.join(" "), row.rhs);
    }
    out
}
