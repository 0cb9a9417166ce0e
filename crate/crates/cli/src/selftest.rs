//! The invariant suite behind `lincat selftest`: every check runs on a
//! reproducible random corpus and compares two independent computations.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use lincat::corpus::{equal_variant, generate, CorpusConfig};
use lincat::decide::{decide_equal, prime_bound, Verdict};
use lincat::enumerate::pi_exact;
use lincat::generic::{check_stars, echo_instance, equivalent, generic_form, reconstruct_generic, EchoParams};
use lincat::graph::{almost_equal, Graph};
use lincat::padic::next_prime_above;
use lincat::rewrite::{normalize, replay};
use lincat::syntax::{parse_term, typecheck, Judgement};
use lincat::semantics::{interpret_type, term_column};

use crate::commands::Output;
use crate::{Config, Failure, Format};

const CHECKS: [&str; 7] = ["print-parse", "normalize", "wellformed", "json", "coefficients", "echo", "decide"];

#[derive(Default, Clone)]
struct Tally {
    passed: usize,
    failed: usize,
    skipped: usize,
}

struct Suite {
    tallies: Vec<Tally>,
    failures: Vec<String>,
}

impl Suite {
    fn record(&mut self, check: usize, term: &Judgement, result: Result<bool, String>) {
        let t = &mut self.tallies[check];
        match result {
            Ok(true) => t.passed += 1,
            Ok(false) => t.skipped += 1,
            Err(why) => {
                t.failed += 1;
                if self.failures.len() < 20 {
                    self.failures.push(format!("{}: {}: {why}", CHECKS[check], term.term));
                }
            }
        }
    }
}

fn check(cond: bool, why: impl FnOnce() -> String) -> Result<bool, String> {
    if cond {
        Ok(true)
    } else {
        Err(why())
    }
}

pub fn run(cfg: &Config, count: usize, inject_failure: bool) -> Result<Output, Failure> {
    let mut ccfg = CorpusConfig { seed: cfg.seed, count, ..CorpusConfig::default() };
    if let Some(atoms) = &cfg.atoms {
        ccfg.atoms = atoms.clone();
    }
    let rcfg = cfg.rewrite();
    let interp = lincat::semantics::Interp::for_atoms(&ccfg.atoms, cfg.interp_size, cfg.degree);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5e1f);
    let mut suite = Suite { tallies: vec![Tally::default(); CHECKS.len()], failures: Vec::new() };

    for j in generate(&ccfg) {
        let printed = j.term.to_string();
        suite.record(0, &j, check(parse_term(&printed).as_ref() == Ok(&j.term), || format!("reparsed as something else: {printed}")));

        let norm = match normalize(&j.term, &rcfg) {
            Ok((nf, trace)) => {
                let typed = typecheck(&nf).map(|k| (k.source, k.target)) == Ok((j.source.clone(), j.target.clone()));
                let stable = normalize(&nf, &rcfg).map(|r| r.0).as_ref() == Ok(&nf);
                let replays = replay(&j.term, &trace).as_ref() == Ok(&nf);
                check(typed && stable && replays, || format!("typed {typed}, idempotent {stable}, replayable {replays}"))
            }
            Err(_) => Ok(false),
        };
        suite.record(1, &j, norm);

        let g = match Graph::normal_of(&j) {
            Ok(g) => g,
            Err(e) => {
                suite.record(2, &j, Err(e.to_string()));
                continue;
            }
        };
        let wf = g.check_wellformed();
        suite.record(2, &j, check(wf.ok(), || wf.violations.join("; ")));
        let back = Graph::from_json(&g.to_json());
        suite.record(3, &j, check(back.as_ref().is_ok_and(|b| almost_equal(&g, b)), || "JSON round trip changed the graph".into()));

        suite.record(4, &j, coefficients(&j, &g, &interp, &mut rng, inject_failure));
        suite.record(5, &j, echo(&g));

        let variant = equal_variant(&mut rng, &j, &rcfg);
        let verdict = decide_equal(&j.term, &variant, &rcfg).map(|d| d.verdict);
        suite.record(
            6,
            &j,
            match verdict {
                Ok(Verdict::EquivalentUpToSim) => Ok(true),
                Ok(Verdict::Inconclusive(_)) => Ok(false),
                other => Err(format!("variant {variant}: {other:?}")),
            },
        );
    }

    let failed: usize = suite.tallies.iter().map(|t| t.failed).sum();
    let text = match cfg.format {
        Format::Json => {
            let checks: Vec<_> = CHECKS
                .iter()
                .zip(&suite.tallies)
                .map(|(name, t)| json!({ "name": name, "passed": t.passed, "failed": t.failed, "skipped": t.skipped }))
                .collect();
            let v = json!({
                "seed": cfg.seed,
                "count": count,
                "ok": failed == 0,
                "checks": checks,
                "failures": suite.failures,
            });
            format!("{}\n", serde_json::to_string_pretty(&v).expect("json"))
        }
        _ => {
            let mut out = format!("selftest: seed {}, {count} terms\n", cfg.seed);
            for (name, t) in CHECKS.iter().zip(&suite.tallies) {
                out.push_str(&format!("{name:>12}: {} passed, {} failed, {} skipped\n", t.passed, t.failed, t.skipped));
            }
            for f in &suite.failures {
                out.push_str(&format!("FAIL {f}\n"));
            }
            out.push_str(if failed == 0 { "ok\n" } else { "FAILED\n" });
            out
        }
    };
    Ok(Output { text, code: if failed == 0 { 0 } else { 1 } })
}

/// The enumeration process against the matrix model on one random target
/// column: its first nonzero entry and one entry outside its support.
/// `corrupt` adds one to every model value, which the suite must notice.
fn coefficients(
    j: &Judgement,
    g: &Graph,
    interp: &lincat::semantics::Interp,
    rng: &mut ChaCha8Rng,
    corrupt: bool,
) -> Result<bool, String> {
    let (Ok(sources), Ok(targets)) = (interpret_type(&j.source, interp), interpret_type(&j.target, interp)) else {
        return Ok(false);
    };
    let Some(beta) = targets.choose(rng) else { return Ok(false) };
    let Ok(col) = term_column(&j.term, beta, interp) else { return Ok(false) };
    let zero = sources.iter().find(|a| !col.contains_key(*a)).map(|a| (a.clone(), Default::default()));
    let mut compared = false;
    for (alpha, want) in col.iter().take(1).map(|(a, v)| (a.clone(), v.clone())).chain(zero) {
        let want = if corrupt { want + 1u32 } else { want };
        match pi_exact(g, std::slice::from_ref(&alpha), std::slice::from_ref(beta), Some(interp)) {
            Ok(got) if got == want => compared = true,
            Ok(got) => return Err(format!("at {alpha} ; {beta}: process {got}, model {want}")),
            Err(_) => {}
        }
    }
    Ok(compared)
}

/// The canonical echo instance satisfies its own conditions and
/// determines the generic form back.
fn echo(g: &Graph) -> Result<bool, String> {
    let Ok(forms) = generic_form(g) else { return Ok(false) };
    let p = next_prime_above(prime_bound(g, g));
    let params = EchoParams::canonical(&forms, g, p);
    let (alpha, beta) = echo_instance(g, &params).map_err(|e| e.to_string())?;
    let stars = check_stars(g, &alpha, &beta, p);
    if !stars.all() {
        return Err(format!("p = {p}: {stars}"));
    }
    let back = reconstruct_generic(&alpha, &beta, p).map_err(|e| e.to_string())?;
    check(equivalent(&back, &forms), || format!("reconstructed {back}, expected {forms}"))
}
