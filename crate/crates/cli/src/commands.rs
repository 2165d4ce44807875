use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use soficity::bsgroup::{elements_in_box, BsElement, Word, A1, A2};
use soficity::conjugacy::{build_conjugator, conjugacy_defect, ConjugatorConfig};
use soficity::expcycles::{prime_power_moduli, sweep, three_cycle_findings, to_csv, Finding};
use soficity::heuristics::{self, check_properties, involution4_count, p_sequence, s_bound_tail, sym_census};
use soficity::localexp::{
    h3_witness, mezo_minimum, padic_fixed_point, padic_fixed_points_brute, search_best_of, LiftedPoint,
    PadicContext, SearchConfig, BRUTE_FORCE_STATES,
};
use soficity::rational::{format as fmt_q, Rational};
use soficity::sofic::{affine_fixed_points, arithmetic_bs_approx, check_sofic, Key, SoficApprox};
use soficity::tiling::{
    admissible_lengths, box_shapes, interval_shapes, plan_parameters, quasi_tile, verify_tiling, TileConfig,
    TilingCertificate,
};
use soficity::Permutation;

use crate::config::{parse_prime_powers, parse_range, parse_rational, Resolver};
use crate::{read_input, CliError, Cli, Command, Context, Outcome};

pub fn dispatch(cli: &Cli, r: &mut Resolver, ctx: &mut Context) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Cycles(a) => cycles(a, r, ctx),
        Command::SoficCheck(a) => sofic_check(a, cli.seed, r, ctx),
        Command::Tile(a) => tile(a, r, ctx),
        Command::Conjugate(a) => conjugate(a, cli.seed, r, ctx),
        Command::SearchF(a) => search_f(a, cli.seed, r, ctx),
        Command::H3(a) => h3(a, r, ctx),
        Command::Padic(a) => padic(a, cli.seed, r, ctx),
        Command::Heuristic(a) => heuristic(a, r, ctx),
        Command::Verify(a) => verify(a, ctx),
    }
}

fn rational_setting(r: &mut Resolver, key: &str, flag: &Option<String>, default: &str) -> Result<Rational, CliError> {
    let s = r.get(key, flag.clone(), default.to_string())?;
    parse_rational(key, &s)
}

#[derive(Serialize)]
struct CyclesSummary {
    m: u64,
    moduli: usize,
    slack: f64,
    findings: Vec<Finding>,
    /// Moduli where iteration and table counts differ.
    route_mismatches: Vec<u64>,
    /// Moduli n ≤ 4.
    degenerate: Vec<u64>,
}

fn cycles(a: &crate::CyclesArgs, r: &mut Resolver, ctx: &mut Context) -> Result<Outcome, CliError> {
    let m = r.get("m", a.m, 2)?;
    let primes = r.get_opt("primes", a.primes.clone())?;
    let powers = r.get_opt("prime_powers", a.prime_powers.clone())?;
    let max_n = r.get("max_n", a.max_n, 10_000_000)?;
    let slack = r.get("slack", a.slack, 100.0)?;
    let mut moduli = Vec::new();
    if let Some(p) = &primes {
        let (lo, hi) = parse_range("primes", p)?;
        moduli.extend(soficity::arith::primes_in_range(lo, hi.min(max_n)));
    }
    if let Some(pp) = &powers {
        let (p_lo, p_hi, r_lo, r_hi) = parse_prime_powers(pp)?;
        moduli.extend(prime_power_moduli(p_lo, p_hi, r_lo, r_hi, max_n));
    }
    if primes.is_none() && powers.is_none() {
        return Err(CliError::Usage("cycles needs --primes or --prime-powers".into()));
    }
    moduli.sort_unstable();
    moduli.dedup();
    let rows = sweep(m, &moduli, ctx.workers)?;
    ctx.write("cycles.csv", to_csv(&rows).as_bytes())?;
    let summary = CyclesSummary {
        m,
        moduli: rows.len(),
        slack,
        findings: three_cycle_findings(&rows, slack),
        route_mismatches: rows.iter().filter(|c| !c.routes_agree()).map(|c| c.n).collect(),
        degenerate: rows.iter().filter(|c| c.degenerate).map(|c| c.n).collect(),
    };
    ctx.write_json("cycles.json", &summary)?;
    Ok(Outcome {
        artifacts: ctx.written.clone(),
        passed: summary.route_mismatches.is_empty(),
        summary: format!(
            "{} moduli, {} findings above 3n/4 + {slack}, {} route mismatches",
            summary.moduli,
            summary.findings.len(),
            summary.route_mismatches.len()
        ),
    })
}

/// `ψ(w)` as a product of generator images, letter by letter.
fn word_permutation(phi: &SoficApprox, w: &Word, m: u64) -> Result<Permutation, CliError> {
    let gens = [BsElement::a1(m)?, BsElement::a2(m)?];
    let mut p = Permutation::identity(phi.degree());
    for &(g, e) in w.letters() {
        let q = phi.element(&gens[g])?.pow(e);
        p = p.compose(&q)?;
    }
    Ok(p)
}

#[derive(Serialize)]
struct AffineMismatch {
    word: String,
    predicted: u64,
    counted: usize,
}

#[derive(Serialize)]
struct SoficOutput {
    report: soficity::sofic::SoficReport,
    elements: usize,
    words_checked: usize,
    affine_mismatches: Vec<AffineMismatch>,
}

fn sofic_check(a: &crate::SoficArgs, seed: Option<u64>, r: &mut Resolver, ctx: &mut Context) -> Result<Outcome, CliError> {
    let n = r.get("n", a.n, 1009)?;
    let m = r.get("m", a.m, 2)?;
    let delta = rational_setting(r, "delta", &a.delta, "1/100")?;
    let e_max = r.get("e_max", a.e_max, 2)?;
    let d_max = r.get("d_max", a.d_max, 2)?;
    let num_max = r.get("num_max", a.num_max, 8)?;
    let words = r.get("words", a.words, 500)?;
    let seed = r.seed(seed)?;
    let elements = elements_in_box(m, e_max, d_max, num_max)?;
    let count = elements.len();
    let phi = arithmetic_bs_approx(n, m)?.with_domain(elements.into_iter().map(Key::Element).collect())?;
    let report = check_sofic(&phi, &delta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = Vec::new();
    for _ in 0..words {
        let len = rng.gen_range(0..=8);
        let w = Word::new((0..len).map(|_| {
            let g = if rng.gen_bool(0.5) { A1 } else { A2 };
            let e = loop {
                let e: i64 = rng.gen_range(-3..=3);
                if e != 0 {
                    break e;
                }
            };
            (g, e)
        }));
        let predicted = affine_fixed_points(&w, m, n as u64)?.fixed_points;
        let counted = word_permutation(&phi, &w, m)?.fixed_points();
        if predicted != counted as u64 {
            mismatches.push(AffineMismatch {
                word: w.to_string(),
                predicted,
                counted,
            });
        }
    }
    let passed = report.pass && mismatches.is_empty();
    let summary = format!(
        "defect {} over {} triples, min displacement {}, {} fixed-point mismatches in {words} words",
        report.max_defect,
        report.triples_checked,
        report.min_displacement,
        mismatches.len()
    );
    ctx.write_json(
        "sofic.json",
        &SoficOutput {
            report,
            elements: count,
            words_checked: words,
            affine_mismatches: mismatches,
        },
    )?;
    Ok(Outcome {
        artifacts: ctx.written.clone(),
        passed,
        summary,
    })
}

fn check_eps(eps: &Rational) -> Result<(), CliError> {
    let quarter = soficity::rational::ratio(1, 4);
    if *eps > quarter || *eps <= Rational::from_integer(0.into()) {
        return Err(CliError::Usage(format!("ε = {} must lie in (0, 1/4]", fmt_q(eps))));
    }
    Ok(())
}

fn tile(a: &crate::TileArgs, r: &mut Resolver, ctx: &mut Context) -> Result<Outcome, CliError> {
    let n = r.get("n", a.n, 1000)?;
    let m = r.get("m", a.m, 3)?;
    let eps = rational_setting(r, "eps", &a.eps, "1/4")?;
    let kappa = rational_setting(r, "kappa", &a.kappa, "1/4")?;
    let base_n = r.get_opt("base_n", a.base_n)?;
    let shapes_kind = r.get("shapes", a.shapes.clone(), "interval".to_string())?;
    let rows = r.get("rows", a.rows, 2)?;
    let cap = r.get("cap", a.cap, 100)?;
    let admissibility_n = r.get_opt("admissibility_n", a.admissibility_n)?;
    let max_delta_prime = r
        .get_opt("max_delta_prime", a.max_delta_prime.clone())?
        .map(|s| parse_rational("max_delta_prime", &s))
        .transpose()?;
    check_eps(&eps)?;
    let phi = match base_n {
        Some(b) => arithmetic_bs_approx(b, m)?.amplify(n)?,
        None => arithmetic_bs_approx(n, m)?,
    };
    let plan = plan_parameters(&eps, &kappa)?;
    let shapes = match shapes_kind.as_str() {
        "interval" => interval_shapes(m, &admissible_lengths(n, &plan, &kappa, 1, cap))?,
        "box" => box_shapes(m, rows, &admissible_lengths(n, &plan, &kappa, rows, cap))?,
        other => return Err(CliError::Usage(format!("unknown shape family {other:?} (interval | box)"))),
    };
    let config = TileConfig {
        admissibility_n,
        max_delta_prime,
        nesting_eta: None,
    };
    let tiling = quasi_tile(&phi, &shapes, &eps, &kappa, &config)?;
    let verification = verify_tiling(&tiling, &phi);
    ctx.write_json(
        "tiling.json",
        &TilingCertificate {
            tiling,
            model: phi.describe(),
        },
    )?;
    ctx.write_json("verification.json", &verification)?;
    let failed: Vec<&str> = verification
        .conclusions
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    Ok(Outcome {
        artifacts: ctx.written.clone(),
        passed: verification.pass,
        summary: if verification.pass {
            format!("tiling of degree {n} verified, k = {}", plan.k)
        } else {
            format!("tiling fails: {failed:?}, λ recursion {}", verification.lambda_recursion)
        },
    })
}

fn conjugate(a: &crate::ConjugateArgs, seed: Option<u64>, r: &mut Resolver, ctx: &mut Context) -> Result<Outcome, CliError> {
    let n = r.get("n", a.n, 1000)?;
    let m = r.get("m", a.m, 3)?;
    let eps = rational_setting(r, "eps", &a.eps, "1/4")?;
    let tile_eps = r
        .get_opt("tile_eps", a.tile_eps.clone())?
        .map(|s| parse_rational("tile_eps", &s))
        .transpose()?;
    let tile_kappa = r
        .get_opt("tile_kappa", a.tile_kappa.clone())?
        .map(|s| parse_rational("tile_kappa", &s))
        .transpose()?;
    let cap = r.get("cap", a.cap, 100)?;
    let seed = r.seed(seed)?;
    let seven = soficity::rational::from_int(7);
    let te = tile_eps.clone().unwrap_or_else(|| &eps / &seven);
    let tk = tile_kappa.clone().unwrap_or_else(|| &eps / &seven);
    check_eps(&te)?;
    let phi1 = arithmetic_bs_approx(n, m)?;
    let sigma = Permutation::random(n, &mut ChaCha8Rng::seed_from_u64(seed));
    let phi2 = phi1.conjugate(&sigma)?;
    let plan = plan_parameters(&te, &tk)?;
    let shapes = interval_shapes(m, &admissible_lengths(n, &plan, &tk, 1, cap))?;
    let config = ConjugatorConfig {
        tile_eps,
        tile_kappa,
        tile: TileConfig::default(),
    };
    let c = build_conjugator(&phi1, &phi2, &shapes, &eps, &config)?;
    let keys = vec![Key::Element(BsElement::a1(m)?), Key::Element(BsElement::a2(m)?)];
    let report = conjugacy_defect(&c, &phi1, &phi2, &keys)?;
    ctx.write_json("conjugator.json", &c)?;
    ctx.write_json("conjugacy.json", &report)?;
    Ok(Outcome {
        artifacts: ctx.written.clone(),
        passed: report.pass,
        summary: format!("max defect {} against ε = {}", report.max_defect, fmt_q(&eps)),
    })
}

fn search_f(a: &crate::SearchArgs, seed: Option<u64>, r: &mut Resolver, ctx: &mut Context) -> Result<Outcome, CliError> {
    let defaults = SearchConfig::default();
    let n = r.get("n", a.n, 16)?;
    let m = r.get("m", a.m, 3)?;
    let budget = r.get("budget", a.budget, defaults.budget)?;
    let count = r.get("seeds", a.seeds, 1)?;
    let t_start = r.get("t_start", a.t_start, defaults.t_start)?;
    let t_end = r.get("t_end", a.t_end, defaults.t_end)?;
    let seed = r.seed(seed)?;
    if count == 0 || !(t_start > 0.0 && t_end > 0.0) {
        return Err(CliError::Usage("seeds and temperatures must be positive".into()));
    }
    let config = SearchConfig {
        budget,
        t_start,
        t_end,
        ..defaults
    };
    let seeds: Vec<u64> = (0..count).map(|i| seed.wrapping_add(i)).collect();
    let best = search_best_of(n, m, &seeds, &config)?;
    let sound = best.f.is_four_periodic() && best.defect == best.defect_recomputed;
    ctx.write_json("search.json", &best)?;
    Ok(Outcome {
        artifacts: ctx.written.clone(),
        passed: sound,
        summary: format!(
            "best defect {}/{n} (seed {}, {}{})",
            best.defect,
            best.seed,
            if best.exhaustive { "exhaustive" } else { "annealing" },
            if best.budget_exhausted { ", budget exhausted" } else { "" }
        ),
    })
}

#[derive(Serialize)]
struct H3Output {
    minimum: soficity::localexp::MezoMinimum,
    witness: soficity::localexp::H3Witness,
}

fn h3(a: &crate::H3Args, r: &mut Resolver, ctx: &mut Context) -> Result<Outcome, CliError> {
    let n = r.get("n", a.n, 7)?;
    let minimum = mezo_minimum(n)?;
    let witness = h3_witness(&minimum.witness, minimum.m)?;
    let positive = minimum.fraction > Rational::from_integer(0.into());
    let passed = positive && witness.g1_displacement.numerator == n && witness.conjugations_hold;
    let summary = format!("minimum failing fraction {} at m = {}", fmt_q(&minimum.fraction), minimum.m);
    ctx.write_json("h3.json", &H3Output { minimum, witness })?;
    Ok(Outcome {
        artifacts: ctx.written.clone(),
        passed,
        summary,
    })
}

#[derive(Serialize)]
struct PadicRow {
    c: [u64; 4],
    lifted: LiftedPoint,
    brute_force: Option<Vec<[u64; 4]>>,
    agree: Option<bool>,
}

#[derive(Serialize)]
struct PadicOutput {
    context: PadicContext,
    rows: Vec<PadicRow>,
}

fn padic(a: &crate::PadicArgs, seed: Option<u64>, r: &mut Resolver, ctx: &mut Context) -> Result<Outcome, CliError> {
    let p = r.get("p", a.p, 3)?;
    let rr = r.get("r", a.r, 3)?;
    let s = r.get_opt("s", a.s)?;
    let m = r.get_opt("m", a.m)?;
    let tuples = r.get("tuples", a.tuples, 100)?;
    let seed = r.seed(seed)?;
    let context = match (s, m) {
        (Some(s), _) => PadicContext::with_s(p, rr, s)?,
        (None, Some(m)) => PadicContext::new(p, rr, m)?,
        (None, None) => PadicContext::with_s(p, rr, 1 + p)?,
    };
    let q = context.modulus();
    let brute = q.checked_pow(4).is_some_and(|v| v <= BRUTE_FORCE_STATES);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(tuples);
    for _ in 0..tuples {
        let mut c = [0u64; 4];
        for cj in &mut c {
            *cj = loop {
                let v = rng.gen_range(1..q);
                if v % p != 0 {
                    break v;
                }
            };
        }
        let lifted = padic_fixed_point(&context, &c)?;
        let found = if brute { Some(padic_fixed_points_brute(&context, &c)?) } else { None };
        let agree = found
            .as_ref()
            .map(|f| f.len() <= 1 && f.first().copied() == lifted.fixed.then_some(lifted.point));
        rows.push(PadicRow {
            c,
            lifted,
            brute_force: found,
            agree,
        });
    }
    let disagreements = rows.iter().filter(|r| r.agree == Some(false)).count();
    ctx.write_json("padic.json", &PadicOutput { context, rows })?;
    Ok(Outcome {
        artifacts: ctx.written.clone(),
        passed: disagreements == 0,
        summary: format!(
            "{tuples} tuples, {disagreements} disagreements{}",
            if brute { "" } else { " (brute force skipped)" }
        ),
    })
}

#[derive(Serialize)]
struct HeuristicOutput {
    properties: heuristics::PropertyReport,
    /// `(n, n!·P_n, census)` for `n ≤ 9`.
    census: Vec<(usize, String, u64)>,
    eps: f64,
    log_tail_sum: f64,
    decreasing_from: Option<usize>,
    decay_claimed: bool,
}

fn heuristic(a: &crate::HeuristicArgs, r: &mut Resolver, ctx: &mut Context) -> Result<Outcome, CliError> {
    let n_max = r.get("n_max", a.n_max, 500)?;
    let n_start = r.get("n_start", a.n_start, 1)?;
    let n_exact = r.get("n_exact", a.n_exact, heuristics::DEFAULT_N_EXACT)?;
    let eps = r.get("eps", a.eps, 0.2)?;
    let seq = p_sequence(n_max, n_exact)?;
    let tail = s_bound_tail(n_start, n_max, eps, &seq)?;
    ctx.write("heuristic.csv", heuristics::to_csv(&seq, eps).as_bytes())?;
    let properties = check_properties(&seq);
    let mut census = Vec::new();
    for n in 1..=n_max.min(9).min(seq.exact_len()) {
        let count = involution4_count(&seq, n).map_or_else(|| "non-integral".to_string(), |c| c.to_string());
        census.push((n, count, sym_census(n)?));
    }
    let census_ok = census.iter().all(|(_, c, s)| *c == s.to_string());
    let passed = census_ok
        && properties.non_increasing
        && properties.non_integral.is_empty()
        && properties.step_bound_failures.is_empty()
        && properties.factorial_bound_failures.iter().all(|&n| n <= 2);
    let summary = format!(
        "P_1..P_{n_max}: non-increasing {}, factorial bound fails at {:?}, census {}",
        properties.non_increasing,
        properties.factorial_bound_failures,
        if census_ok { "matches" } else { "MISMATCH" }
    );
    ctx.write_json(
        "heuristic.json",
        &HeuristicOutput {
            properties,
            census,
            eps,
            log_tail_sum: tail.log_tail_sum,
            decreasing_from: tail.decreasing_from,
            decay_claimed: tail.decay_claimed,
        },
    )?;
    Ok(Outcome {
        artifacts: ctx.written.clone(),
        passed,
        summary,
    })
}

fn verify(a: &crate::VerifyArgs, ctx: &mut Context) -> Result<Outcome, CliError> {
    let bytes = read_input(&a.certificate)?;
    ctx.inputs.extend_from_slice(&bytes);
    let cert: TilingCertificate =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Failed(format!("malformed certificate: {e}")))?;
    let phi = SoficApprox::from_description(&cert.model).map_err(|e| CliError::Failed(e.to_string()))?;
    let verification = verify_tiling(&cert.tiling, &phi);
    ctx.write_json("verification.json", &verification)?;
    Ok(Outcome {
        artifacts: ctx.written.clone(),
        passed: verification.pass,
        summary: if verification.pass {
            "certificate verified".into()
        } else {
            let failed: Vec<&str> = verification.conclusions.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
            format!("certificate rejected: {failed:?}, λ recursion {}", verification.lambda_recursion)
        },
    })
}
