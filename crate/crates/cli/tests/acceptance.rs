//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use qhalt::ancilla_model::{
    coherence, fixed_point_impossibility, monitoring_effect, AncillaError, AncillaPolicy, BranchSpec, RunTrace,
};
use qhalt::halting_nogo::generate::complex_normal;
use qhalt::halting_nogo::{
    gram_report, random_compliant_table, random_unitary_table, search_max_halting_mass, seeded_rng, verify_nogo,
    SearchConfig,
};
use qhalt::qtm::{build_global_matrix, check_global_unitarity, check_ozawa_compliance, machines, step};
use qhalt::{Complex64, Configuration, MachineDims, SparseState};
use qhalt_cli::document::{MachineDef, ScenarioDef};
use rand::Rng;

const NOGO_TOL: f64 = 1e-10;
const NOGO_SAMPLES: usize = 100;
const NOGO_BUDGET: Duration = Duration::from_secs(300);
const WITNESS_MIN_MASS: f64 = 0.5;
const SEARCH_MAX_MASS: f64 = 1e-6;
const SEARCH_MAX_DEVIATION: f64 = 1e-8;
const SEARCH_BUDGET: Duration = Duration::from_secs(600);
const UNITARITY_TOL: f64 = 1e-12;
const STEP_VS_DENSE_TOL: f64 = 1e-14;
const EXACT_ZERO_TOL: f64 = 1e-15;
const CLAIM_TOL: f64 = 1e-12;
const FIXED_POINT_TOL: f64 = 1e-10;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn dims_226() -> MachineDims {
    MachineDims::new(2, 2, 6).unwrap()
}

fn no_go_on_random_tables() -> Verdict {
    let start = Instant::now();
    let (mut worst_res, mut worst_mass, mut all_pass) = (0.0f64, 0.0f64, true);
    for i in 0..NOGO_SAMPLES {
        let table = random_compliant_table(dims_226(), &mut seeded_rng(1, i as u64));
        match verify_nogo(&table, NOGO_TOL) {
            Ok(r) => {
                worst_res = worst_res.max(r.max_residual());
                worst_mass = worst_mass.max(r.halting_mass);
                all_pass &= r.pass;
            }
            Err(_) => all_pass = false,
        }
    }
    let elapsed = start.elapsed();
    Verdict {
        pass: all_pass && worst_res <= NOGO_TOL && worst_mass <= NOGO_TOL && elapsed <= NOGO_BUDGET,
        detail: format!(
            "{NOGO_SAMPLES} tables at D=1536: max residual {worst_res:.2e}, max halting mass {worst_mass:.2e} (tol {NOGO_TOL:.0e}), {:.1}s",
            elapsed.as_secs_f64()
        ),
    }
}

fn converse_witness() -> Verdict {
    let table = machines::halt_flipper(dims_226());
    let unitary = check_global_unitarity(&table, UNITARITY_TOL).unwrap();
    let compliant = check_ozawa_compliance(&table).pass();
    let mass = gram_report(&table, NOGO_TOL).halting_mass;

    let mut config = SearchConfig::new(4, 200, 0);
    config.halting_scheme = false;
    let search = search_max_halting_mass(dims_226(), &config).unwrap();
    Verdict {
        pass: unitary.pass
            && !compliant
            && mass >= WITNESS_MIN_MASS
            && search.best_mass >= WITNESS_MIN_MASS
            && search.best_unitarity_deviation <= SEARCH_MAX_DEVIATION,
        detail: format!(
            "constructed table: deviation {:.1e}, halting mass {mass}; unconstrained search: mass {:.6}, deviation {:.1e}",
            unitary.max_deviation, search.best_mass, search.best_unitarity_deviation
        ),
    }
}

fn search_collapses() -> Verdict {
    let start = Instant::now();
    let result = search_max_halting_mass(dims_226(), &SearchConfig::new(20, 500, 0)).unwrap();
    let elapsed = start.elapsed();
    Verdict {
        pass: result.best_mass <= SEARCH_MAX_MASS
            && result.best_unitarity_deviation <= SEARCH_MAX_DEVIATION
            && elapsed <= SEARCH_BUDGET,
        detail: format!(
            "20 restarts x 500 iterations: best mass {:.2e} (<= {SEARCH_MAX_MASS:.0e}), deviation {:.2e} (<= {SEARCH_MAX_DEVIATION:.0e}), {:.1}s",
            result.best_mass,
            result.best_unitarity_deviation,
            elapsed.as_secs_f64()
        ),
    }
}

fn unitarity_engine() -> Verdict {
    let dims = dims_226();
    let d = dims.dimension().unwrap();
    let (mut worst_dev, mut worst_step) = (0.0f64, 0.0f64);
    for i in 0..20u64 {
        let mut rng = seeded_rng(4, i);
        let table =
            if i % 2 == 0 { random_compliant_table(dims, &mut rng) } else { random_unitary_table(dims, &mut rng) };
        let g = build_global_matrix(&table).unwrap();
        worst_dev = worst_dev.max(g.unitarity_deviation());
        for _ in 0..10 {
            let sparse: SparseState<Configuration> = (0..16)
                .map(|_| (Configuration::from_index(&dims, rng.random_range(0..d)), complex_normal(&mut rng)))
                .collect();
            let sparse = sparse.scaled(Complex64::new(1.0 / sparse.norm(), 0.0));
            let mut dense = DVector::zeros(d);
            for (c, a) in sparse.iter() {
                dense[c.index(&dims)] = *a;
            }
            let via_matrix = g.apply(&dense);
            let via_step = step(&sparse, &table).unwrap();
            for (row, v) in via_matrix.iter().enumerate() {
                worst_step = worst_step.max((v - via_step.get(&Configuration::from_index(&dims, row))).norm());
            }
        }
    }
    Verdict {
        pass: worst_dev <= UNITARITY_TOL && worst_step <= STEP_VS_DENSE_TOL,
        detail: format!(
            "20 tables: max |U^dagger U - I| {worst_dev:.2e} (<= {UNITARITY_TOL:.0e}); step vs dense {worst_step:.2e} (<= {STEP_VS_DENSE_TOL:.0e})"
        ),
    }
}

fn two_branches(t1: usize, t2: usize, policy: &AncillaPolicy, t_max: usize) -> RunTrace {
    let branch = |id: u64, base: u64, halt: usize| {
        BranchSpec::new(id, (0..=halt as u64).map(|t| base + t).collect(), halt).unwrap()
    };
    let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    qhalt::ancilla_model::run_superposition(&[branch(1, 100, t1), branch(2, 200, t2)], &[a, a], policy, t_max).unwrap()
}

fn swap_0_2() -> AncillaPolicy {
    AncillaPolicy::permuted([(2, vec![2, 1, 0])].into_iter().collect()).unwrap()
}

fn decoherence_claims() -> Verdict {
    let unequal = two_branches(3, 5, &AncillaPolicy::shared(), 20);
    let worst_unequal = (3..=20).map(|t| coherence(&unequal, t, 0, 1).unwrap().norm()).fold(0.0, f64::max);
    let equal = two_branches(3, 3, &AncillaPolicy::shared(), 20);
    let worst_equal = (0..=20).map(|t| (coherence(&equal, t, 0, 1).unwrap().norm() - 0.5).abs()).fold(0.0, f64::max);
    Verdict {
        pass: worst_unequal <= EXACT_ZERO_TOL && worst_equal <= CLAIM_TOL,
        detail: format!(
            "halt 3 vs 5: max |coherence| for t >= 3 is {worst_unequal:.1e} (<= {EXACT_ZERO_TOL:.0e}); equal halts: max ||coherence| - 0.5| {worst_equal:.1e}"
        ),
    }
}

fn monitoring_claims() -> Verdict {
    let shared = two_branches(3, 5, &AncillaPolicy::shared(), 20);
    let worst_shared = (0..=20).map(|t| monitoring_effect(&shared, (0, 1), t).unwrap().delta).fold(0.0, f64::max);
    let permuted = two_branches(3, 5, &swap_0_2(), 20);
    let deltas: Vec<f64> = (0..=20).map(|t| monitoring_effect(&permuted, (0, 1), t).unwrap().delta).collect();
    let at_five = (deltas[5] - 0.5).abs();
    let elsewhere = deltas.iter().enumerate().filter(|&(t, _)| t != 5).map(|(_, d)| *d).fold(0.0, f64::max);
    Verdict {
        pass: worst_shared <= CLAIM_TOL && at_five <= CLAIM_TOL && elsewhere <= CLAIM_TOL,
        detail: format!(
            "shared orbit: max delta {worst_shared:.1e}; swapped orbit: delta(5) = {}, max elsewhere {elsewhere:.1e}",
            deltas[5]
        ),
    }
}

fn fixed_point() -> Verdict {
    let mut rng = seeded_rng(7, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let r: f64 = rng.random_range(0.0..1.0);
        let dim = rng.random_range(2..=16);
        let cert = fixed_point_impossibility(dim, r, &mut rng).unwrap();
        worst = worst.max((cert.residual - (2.0 - 2.0 * r).sqrt()).abs());
    }
    Verdict {
        pass: worst <= FIXED_POINT_TOL,
        detail: format!("100 pairs: max |residual - sqrt(2 - 2r)| {worst:.1e} (<= {FIXED_POINT_TOL:.0e})"),
    }
}

fn ancilla_orthogonality() -> Verdict {
    let mut rng = seeded_rng(8, 0);
    let mut rejected = 0;
    let trials = 200;
    for i in 0..trials {
        let len = rng.random_range(2..10);
        let mut map: Vec<usize> = (0..len).collect();
        let (a, b) = (rng.random_range(0..len), rng.random_range(0..len - 1));
        let b = if b >= a { b + 1 } else { b };
        map[b] = map[a];
        let maps: BTreeMap<u64, Vec<usize>> = [(1, map)].into_iter().collect();
        let result = if i % 2 == 0 { AncillaPolicy::permuted(maps) } else { AncillaPolicy::custom(maps) };
        if matches!(result, Err(AncillaError::NonInjective { .. })) {
            rejected += 1;
        }
    }
    Verdict {
        pass: rejected == trials,
        detail: format!("{rejected}/{trials} non-injective maps rejected at construction"),
    }
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).display().to_string()
}

fn reproducibility() -> Verdict {
    let invocations: Vec<Vec<String>> = [
        vec!["check", &fixture("right_shift.json")],
        vec!["check", &fixture("tape_writer.json")],
        vec!["nogo", &fixture("hadamard_walk.json")],
        vec!["nogo", "--random", "M=2,S=2,N=6", "--samples", "10", "--seed", "7"],
        vec!["search", "--restarts", "4", "--iterations", "100", "--seed", "3"],
        vec!["search", "--restarts", "2", "--iterations", "100", "--no-ozawa"],
        vec!["interfere", &fixture("permuted.json"), "--pair", "1,2"],
        vec!["interfere", &fixture("shared_unequal.json"), "--pair", "1,2"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    let run = |args: &[String]| Command::new(env!("CARGO_BIN_EXE_qhalt")).args(args).output().unwrap();
    let deterministic = invocations.iter().filter(|a| {
        let (x, y) = (run(a), run(a));
        x.status == y.status && x.stdout == y.stdout && x.stderr == y.stderr
    });
    let deterministic = deterministic.count();

    let (mut docs, mut round_trips) = (0, 0);
    for entry in std::fs::read_dir(fixture("")).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        if let Ok(def) = MachineDef::parse(&text) {
            docs += 1;
            let table = def.to_table().unwrap();
            let canonical = MachineDef::from_table(&table);
            if MachineDef::parse(&def.to_json()).as_ref() == Ok(&def)
                && MachineDef::parse(&canonical.to_json()).unwrap().to_table().as_ref() == Ok(&table)
            {
                round_trips += 1;
            }
        } else if let Ok(def) = ScenarioDef::parse(&text) {
            docs += 1;
            if ScenarioDef::parse(&def.to_json()).as_ref() == Ok(&def) {
                round_trips += 1;
            }
        }
    }
    Verdict {
        pass: deterministic == invocations.len() && docs > 0 && round_trips == docs,
        detail: format!(
            "{deterministic}/{} invocations byte-identical on rerun; {round_trips}/{docs} fixture documents round-trip",
            invocations.len()
        ),
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("no-go on random compliant unitary tables", no_go_on_random_tables),
        ("converse witness without the halting scheme", converse_witness),
        ("search collapses to zero halting mass", search_collapses),
        ("unitarity engine and step operator", unitarity_engine),
        ("decoherence of unequal halting times", decoherence_claims),
        ("monitoring effect", monitoring_claims),
        ("fixed-point impossibility", fixed_point),
        ("ancilla orthogonality", ancilla_orthogonality),
        ("reproducibility and round-trips", reproducibility),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        failures += usize::from(!v.pass);
        println!("criterion {} {}: {} ({})", i + 1, if v.pass { "PASS" } else { "FAIL" }, name, v.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
