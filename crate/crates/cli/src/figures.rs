use std::path::Path;

use serde::Serialize;
use serde_json::json;

use quack_core::ext_struct::solve_noise_equilibrium;
use quack_core::ext_variants::one_speaker_equilibrium;
use quack_core::model::NoiseSpec;
use quack_core::rules::{build_max_rule, build_min_rule_extrapolated};

use crate::output::{write_csv, Metadata, Table};
use crate::{CliError, Figure};

const POINTS: usize = 401;

fn unit_grid() -> impl Iterator<Item = f64> {
    (0..POINTS).map(|k| k as f64 / (POINTS - 1) as f64)
}

pub fn run(fig: Figure, dir: &Path, args: impl Serialize) -> Result<(), CliError> {
    let (name, table, notes) = match fig {
        Figure::Fig1 => {
            let eps = 2.0 / 3.0;
            let r = build_max_rule(eps, 4096)?;
            let mut t = Table::new(&["m", "phi"]);
            t.rows = unit_grid().map(|m| vec![m, r.phi(m)]).collect();
            ("fig1.csv", t, json!({ "rule": "max", "epsilon_bar": eps }))
        }
        Figure::Fig2 => {
            let eps = 1.0 / 3.0;
            let r = build_min_rule_extrapolated(eps, 4096)?;
            let mut t = Table::new(&["m", "phi"]);
            t.rows = unit_grid().map(|m| vec![m, r.phi(m)]).collect();
            ("fig2.csv", t, json!({ "rule": "min", "epsilon_bar": eps, "extrapolated": r.extrapolated }))
        }
        Figure::Fig3 => {
            let noise = NoiseSpec::Triangular { half_width: 0.05 };
            let eq = solve_noise_equilibrium(noise, 401, 1000, 1e-4)?;
            let mut t = Table::new(&["m", "f_q"]);
            t.rows = eq.f_q.xs.iter().zip(&eq.f_q.density).map(|(x, d)| vec![*x, *d]).collect();
            (
                "fig3.csv",
                t,
                json!({ "noise": noise, "iterations": eq.iterations, "residual": eq.residual }),
            )
        }
        Figure::Fig4 => {
            let eps = [1.0, 0.75, 0.5, 0.25, 0.05];
            let rules = eps.iter().map(|&e| build_max_rule(e, 4096)).collect::<Result<Vec<_>, _>>()?;
            let mut header = vec!["m".to_string()];
            header.extend(eps.iter().map(|e| format!("phi_eps_{e}")));
            header.push("limit".into());
            let rows = unit_grid()
                .map(|m| {
                    let mut row = vec![m];
                    row.extend(rules.iter().map(|r| r.phi(m)));
                    row.push((1.0 + m) / 2.0);
                    row
                })
                .collect();
            ("fig4.csv", Table { header, rows }, json!({ "rule": "max", "epsilon_bar": eps }))
        }
        Figure::Fig5 => {
            let (q, eps) = (0.5, 1.0 / 3.0);
            let us = [2.0 / 3.0, 0.8];
            let eqs = us
                .iter()
                .map(|&u| one_speaker_equilibrium(q, u, eps))
                .collect::<Result<Vec<_>, _>>()?;
            let mut t = Table::new(&["m", "f_q_u_0.6667", "f_q_u_0.8"]);
            t.rows = (0..POINTS)
                .map(|k| -1.0 + 2.0 * k as f64 / (POINTS - 1) as f64)
                .map(|m| vec![m, eqs[0].density(m), eqs[1].density(m)])
                .collect();
            let regimes: Vec<_> = eqs.iter().map(|e| e.regime).collect();
            ("fig5.csv", t, json!({ "q": q, "u": us, "epsilon_bar": eps, "regimes": regimes }))
        }
    };
    let meta = Metadata::new(
        &format!("figures {}", name.trim_end_matches(".csv")),
        json!({ "args": args, "series": notes }),
        None,
        json!({ "phi": "selection_probability", "f_q": "density" }),
    );
    write_csv(&dir.join(name), &meta, &table)
}
