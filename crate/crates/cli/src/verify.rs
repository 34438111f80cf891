//! The `verify` subcommand: fast property suites runnable from the command
//! line, printing one line per property. Returns the failure count.

use sos_core::analysis::check_monotonicity;
use sos_core::contours::{cluster_decompose, weight_product};
use sos_core::exact::{enumerate_partition, transfer_matrix, ConstraintSet, Window};
use sos_core::lattice::Region;
use sos_core::model::{
    check_fkg_lattice, energy, staircase_bc, BondKind, BoundaryCondition, Exponent, HeightField,
    Params, WeightRule,
};

fn params(p: f64, beta: f64) -> Params {
    Params::new(Exponent::new(p).unwrap(), beta).unwrap()
}

fn report(name: &str, pass: bool, detail: &str) -> u32 {
    println!("{name}: {} - {detail}", if pass { "pass" } else { "FAIL" });
    u32::from(!pass)
}

pub fn run_suite(suite: &str) -> sos_core::Result<u32> {
    match suite {
        "fkg" => Ok(verify_fkg()),
        "bijection" => Ok(verify_bijection()),
        "oracle" => Ok(verify_oracle()),
        "monotonicity" => Ok(verify_monotonicity()),
        "all" => Ok(verify_fkg() + verify_bijection() + verify_oracle() + verify_monotonicity()),
        other => Err(sos_core::Error::validation(format!(
            "unknown suite `{other}`; expected fkg|bijection|oracle|monotonicity|all"
        ))),
    }
}

fn verify_fkg() -> u32 {
    let mut failures = 0;
    for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
        for kind in [BondKind::Standard, BondKind::Tilted] {
            let v = check_fkg_lattice(&params(p, 1.0), kind, -5..=5);
            failures += report(
                &format!("fkg p={p} {kind:?}"),
                v.is_none(),
                &v.map(|c| format!("violated at {c:?}")).unwrap_or_else(|| "no violations".into()),
            );
        }
    }
    failures
}

fn verify_bijection() -> u32 {
    let region = Region::square(1).unwrap();
    let pr = params(1.0, 1.2);
    let mut heights = vec![-1i64; 9];
    let mut seen = std::collections::HashSet::new();
    let mut count: u64 = 0;
    let mut identity_ok = true;
    let mut weights_ok = true;
    loop {
        let f = HeightField::new(region.clone(), heights.clone(), BoundaryCondition::Zero)
            .unwrap();
        let cfg = cluster_decompose(&f).unwrap();
        identity_ok &= cfg.combined_heights(&region).unwrap() == heights;
        identity_ok &= seen.insert(
            cfg.clusters.iter().map(|c| (c.support.clone(), c.gradients.clone())).collect::<Vec<_>>(),
        );
        let lw = weight_product(&cfg, &pr, &WeightRule::Standard).unwrap();
        weights_ok &= (lw + pr.beta * energy(&f, &pr, &WeightRule::Standard)).abs() <= 1e-10;
        count += 1;
        let mut i = 0;
        loop {
            if i == 9 {
                break;
            }
            heights[i] += 1;
            if heights[i] <= 1 {
                break;
            }
            heights[i] = -1;
            i += 1;
        }
        if i == 9 {
            break;
        }
    }
    report("bijection identity+injectivity", identity_ok && count == 19683, &format!("{count} configs"))
        + report("bijection weights", weights_ok, "log weight == -beta H")
}

fn verify_oracle() -> u32 {
    let mut failures = 0;
    let w = Window::new(-2, 2).unwrap();
    for (l, m, p, stair) in [
        (0i64, 2i64, 1.0, false),
        (0, 3, 2.0, true),
        (1, 1, f64::INFINITY, false),
        (1, 1, 1.0, true),
        (0, 4, 2.0, false),
        (1, 1, 2.0, true),
    ] {
        let pr = params(p, 1.1);
        let bc = if stair {
            staircase_bc(vec![0], vec![0], l, m).unwrap()
        } else {
            BoundaryCondition::Zero
        };
        let region = Region::rectangle(l, m).unwrap();
        let ze = enumerate_partition(&region, &bc, &pr, w, &ConstraintSet::default()).unwrap();
        let zt = transfer_matrix(l, m, &bc, &pr, w, &ConstraintSet::default()).unwrap();
        let rel = (ze.log_z - zt.log_z).abs() / ze.log_z.abs().max(1.0);
        failures += report(
            &format!("oracle L={l} M={m} p={p} staircase={stair}"),
            rel <= 1e-10,
            &format!("relative gap {rel:.2e}"),
        );
    }
    failures
}

fn verify_monotonicity() -> u32 {
    let mut pairs = Vec::new();
    for a1 in -1..=1i64 {
        for a2 in a1..=1 {
            pairs.push(vec![a1, a2]);
        }
    }
    let staircases: Vec<(Vec<i64>, Vec<i64>)> =
        pairs.iter().flat_map(|a| pairs.iter().map(move |b| (a.clone(), b.clone()))).collect();
    let cases = match check_monotonicity(
        &staircases,
        1,
        &[8, 9],
        params(1.0, 2.0),
        Window::new(-5, 7).unwrap(),
        1e-10,
    ) {
        Ok(c) => c,
        Err(e) => {
            return report("monotonicity", false, &format!("{e}"));
        }
    };
    let mut failures = 0;
    println!("a,b,M,product_margin,shift_margin");
    let mut ok = true;
    for c in &cases {
        println!(
            "{:?},{:?},{},{:.3e},{:.3e}",
            c.a, c.b, c.m_used, c.product_margin, c.shift_margin
        );
        ok &= c.converged && c.product_margin <= 1e-9 && c.shift_margin <= 1e-9;
    }
    failures += report("monotonicity product+shift", ok, &format!("{} staircases", cases.len()));
    failures
}
