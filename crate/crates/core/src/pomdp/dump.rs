//! Plain-text model dump.
//!
//! One record per line, whitespace separated, floats in shortest round-trip
//! form:
//!
//! ```text
//! pomdp v1
//! pool <ap> <ap> ...
//! b_con <n>
//! horizon <H>
//! discount <gamma>
//! action <index> <pool position> ...          (one line per action)
//! initial <upsilon_0> <upsilon_1> ...
//! trans <stage> <p11_0> <p01_0> <p11_1> <p01_1> ...   (stages 1..=H)
//! marginal <stage> <p_0> <p_1> ...                     (stages 0..=H)
//! reward <state> <r_action0> <r_action1> ...           (one line per state)
//! ```
//!
//! States are bitmasks over pool positions; bit `j` set means position `j` is
//! in the good state.

use std::io::Write;

use super::PomdpModel;

pub fn write_model<W: Write>(model: &PomdpModel, mut w: W) -> std::io::Result<()> {
    let join = |it: &mut dyn Iterator<Item = String>| it.collect::<Vec<_>>().join(" ");
    writeln!(w, "pomdp v1")?;
    writeln!(w, "pool {}", join(&mut model.pool.iter().map(|p| p.to_string())))?;
    writeln!(w, "b_con {}", model.b_con)?;
    writeln!(w, "horizon {}", model.horizon)?;
    writeln!(w, "discount {}", model.discount)?;
    for a in 0..model.num_actions() {
        writeln!(
            w,
            "action {a} {}",
            join(&mut model.selected(a).into_iter().map(|j| j.to_string()))
        )?;
    }
    writeln!(
        w,
        "initial {}",
        join(&mut model.initial_belief.upsilon.iter().map(|u| u.to_string()))
    )?;
    for (k, tr) in model.trans.iter().enumerate() {
        writeln!(
            w,
            "trans {} {}",
            k + 1,
            join(&mut tr.iter().map(|t| format!("{} {}", t.p11, t.p01)))
        )?;
    }
    for (k, m) in model.obs_marginals.iter().enumerate() {
        writeln!(w, "marginal {k} {}", join(&mut m.iter().map(|p| p.to_string())))?;
    }
    for s in 0..model.num_states() {
        writeln!(
            w,
            "reward {s} {}",
            join(&mut (0..model.num_actions()).map(|a| model.reward(s, a).to_string()))
        )?;
    }
    Ok(())
}
