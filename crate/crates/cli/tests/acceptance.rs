//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Failures are reported but do not fail the process unless
//! `ACCEPTANCE_STRICT=1` is set; a panic always does.

use std::cell::Cell;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use flair_core::backtest::{evaluate_strategy, optimize, StrategyFamily, StrategySpec};
use flair_core::curve::{tick_lower, tick_to_price, tick_upper, CurveSpec, LiquidityDistribution};
use flair_core::metrics::{flair_aggregate, flair_position};
use flair_core::scenarios::{
    closed_form, generate, is_converged, random_log, ScenarioKind, ScenarioSpec, Trajectory,
};
use flair_core::timeline::{ingest, PoolEvent, PoolTimeline, Window};
use flair_core::toxicity::{lvr, Volatility};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

const GAMMAS: [f64; 3] = [0.0005, 0.003, 0.01];
const SPANS: [f64; 2] = [10.0, 100.0];
const PROPERTY_CASES: u32 = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn timeline(spec: &ScenarioSpec) -> PoolTimeline<f64> {
    ingest(generate(spec).unwrap(), spec.curve().unwrap()).unwrap()
}

fn cm_agg(spec: &ScenarioSpec) -> f64 {
    flair_aggregate(&timeline(spec), Window::new(spec.t0, spec.t_end))
        .unwrap()
        .value
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn pair(gamma: f64, span: f64, trajectory: Trajectory) -> ScenarioSpec {
    ScenarioSpec {
        gamma,
        t_end: span,
        trajectory,
        ..ScenarioSpec::new(ScenarioKind::V3FullyCompetitivePair)
    }
}

/// Pair values from the engine, keyed like `GAMMAS × SPANS`.
fn pair_values(trajectory: Trajectory) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for g in GAMMAS {
        for s in SPANS {
            out.push((g, s, cm_agg(&pair(g, s, trajectory))));
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let base = ScenarioSpec {
        capital: 5.0,
        fee_rate: 1.0,
        t_end: 10.0,
        ..ScenarioSpec::new(ScenarioKind::CfmmConstantPrice)
    };
    let got = cm_agg(&base);
    let worst = Cell::new(rel(got, 1.0));
    let cases = Cell::new(0);
    let mut runner = runner(20);
    let triples = (0.1f64..1000.0, 1usize..400, 0.01f64..100.0, 0.01f64..10.0);
    let result = runner.run(&triples, |(capital, steps, span, fee)| {
        let spec = ScenarioSpec {
            capital,
            fee_rate: fee,
            t_end: span,
            grid_step: span / steps as f64,
            ..ScenarioSpec::new(ScenarioKind::CfmmConstantPrice)
        };
        let expected = fee * span / (2.0 * capital);
        let e = rel(cm_agg(&spec), expected);
        worst.set(worst.get().max(e));
        cases.set(cases.get() + 1);
        if e <= 1e-9 {
            Ok(())
        } else {
            Err(TestCaseError::fail(format!("{spec:?}: rel err {e:e}")))
        }
    });
    Outcome {
        pass: result.is_ok() && rel(got, 1.0) <= 1e-9,
        detail: format!(
            "c=5 f=1 T=10 gives {got:.15}; {} random triples; worst rel err {:.2e} (tol 1e-9)",
            cases.get(),
            worst.get()
        ),
    }
}

fn criterion_2() -> (Outcome, Vec<(f64, f64, f64)>) {
    let values = pair_values(Trajectory::Constant);
    let mut worst = 0.0f64;
    let mut worst_half = 0.0f64;
    for &(g, s, v) in &values {
        worst = worst.max(rel(v, 2.0 * g * s));
        worst_half = worst_half.max(rel(v, g * s / 2.0));
        assert_eq!(closed_form(&pair(g, s, Trajectory::Constant)), Some(2.0 * g * s));
    }
    let (g, s, v) = values[3];
    let detail = format!(
        "γ={g} T={s}: engine {v:.12} vs 2γT = {:.12}; worst rel err {worst:.2e} (tol 1e-6). \
         Engine matches γT/2, the value implied by V_i = fee/γ with two LPs, to {worst_half:.2e}",
        2.0 * g * s
    );
    (
        Outcome {
            pass: worst <= 1e-6,
            detail,
        },
        values,
    )
}

fn criterion_3(reference: &[(f64, f64, f64)]) -> Outcome {
    let moved = pair_values(Trajectory::Linear);
    let worst = reference
        .iter()
        .zip(&moved)
        .map(|(a, b)| rel(a.2, b.2))
        .fold(0.0, f64::max);
    Outcome {
        pass: worst <= 1e-6,
        detail: format!("linear vs constant price over 6 (γ, T) pairs; worst rel diff {worst:.2e} (tol 1e-6)"),
    }
}

fn criterion_4(reference: &[(f64, f64, f64)]) -> Outcome {
    let mut worst = 0.0f64;
    let mut converged = true;
    for &(g, s, v) in reference {
        let spec = ScenarioSpec {
            gamma: g,
            t_end: s,
            p_min: 1.05,
            p_max: 1.06,
            tick_spacing: 2000,
            ..ScenarioSpec::new(ScenarioKind::V3PassiveVsCompetitive)
        };
        converged &= is_converged(&spec).unwrap();
        worst = worst.max(rel(cm_agg(&spec), v));
    }
    Outcome {
        pass: converged && worst <= 1e-6,
        detail: format!(
            "ts=2000 over [1.05, 1.06], 6 (γ, T) pairs; single range: {converged}; worst rel diff {worst:.2e} (tol 1e-6)"
        ),
    }
}

fn random_dist() -> impl Strategy<Value = LiquidityDistribution<f64>> {
    (1usize..6)
        .prop_flat_map(|k| {
            (
                prop::collection::vec(0.05f64..20.0, k + 1),
                prop::collection::vec(0.0f64..1000.0, k),
            )
        })
        .prop_map(|(mut bps, levels)| {
            bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            bps.dedup();
            let n = bps.len() - 1;
            if n == 0 {
                return LiquidityDistribution::zero();
            }
            LiquidityDistribution::new(bps, levels[..n].to_vec()).unwrap()
        })
}

fn scaled_log(events: &[PoolEvent<f64>], factor: f64) -> Vec<PoolEvent<f64>> {
    events
        .iter()
        .cloned()
        .map(|mut e| {
            e.liquidity_delta = e.liquidity_delta.map(|l| l * factor);
            e
        })
        .collect()
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

fn criterion_5() -> Outcome {
    let v3 = CurveSpec::concentrated(0.003, 1).unwrap();
    let mut failures = Vec::new();
    let mut record = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };

    record(
        "monotone",
        runner(PROPERTY_CASES)
            .run(&(random_dist(), 0.01f64..30.0, 0.01f64..30.0), |(d, a, b)| {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let (xl, yl) = v3.reserves(lo, &d).unwrap();
                let (xh, yh) = v3.reserves(hi, &d).unwrap();
                check(
                    xh <= xl * (1.0 + 1e-15) + 1e-12 && yh >= yl * (1.0 - 1e-15) - 1e-12,
                    || format!("{d:?} at {lo}, {hi}"),
                )
            })
            .map_err(|e| e.to_string()),
    );
    record(
        "additive/homogeneous",
        runner(PROPERTY_CASES)
            .run(
                &(random_dist(), random_dist(), 0.01f64..30.0, 0.0f64..50.0),
                |(a, b, p, lambda)| {
                    let (xa, ya) = v3.reserves(p, &a).unwrap();
                    let (xb, yb) = v3.reserves(p, &b).unwrap();
                    let (xs, ys) = v3.reserves(p, &a.add(&b)).unwrap();
                    let v = v3.portfolio_value(p * 1.1, p, &a).unwrap();
                    let vs = v3.portfolio_value(p * 1.1, p, &a.scaled(lambda)).unwrap();
                    check(
                        rel(xs, xa + xb) < 1e-12 && rel(ys, ya + yb) < 1e-12 && rel(vs, lambda * v) < 1e-12,
                        || format!("p={p} λ={lambda}"),
                    )
                },
            )
            .map_err(|e| e.to_string()),
    );
    record(
        "marginal price",
        runner(PROPERTY_CASES)
            .run(
                &(1.0f64..1e6, 0.1f64..5.0, 1.01f64..10.0, 0.05f64..0.95),
                |(level, lo, width, u)| {
                    let d = LiquidityDistribution::interval(lo, lo * width, level).unwrap();
                    let p = lo * width.powf(u);
                    let h = p * 1e-7;
                    let (x0, y0) = v3.reserves(p - h, &d).unwrap();
                    let (x1, y1) = v3.reserves(p + h, &d).unwrap();
                    let slope = -(y1 - y0) / (x1 - x0);
                    check(rel(slope, p) < 1e-6, || format!("{slope} vs {p}"))
                },
            )
            .map_err(|e| e.to_string()),
    );
    record(
        "tick sandwich",
        runner(PROPERTY_CASES)
            .run(
                &(-60.0f64..60.0, prop::sample::select(vec![1u32, 10, 60, 200])),
                |(logp, ts)| {
                    let p = logp.exp();
                    let lo = tick_lower(p, ts).unwrap();
                    let hi = tick_upper(p, ts).unwrap();
                    let plo: f64 = tick_to_price(lo).unwrap();
                    let phi: f64 = tick_to_price(hi).unwrap();
                    check(plo <= p && p <= phi && hi - lo <= ts as i64, || {
                        format!("p={p} ts={ts}: [{lo}, {hi}]")
                    })
                },
            )
            .map_err(|e| e.to_string()),
    );
    let logs = (any::<u64>(), 2usize..150);
    record(
        "fee conservation",
        runner(PROPERTY_CASES)
            .run(&logs, |(seed, steps)| {
                let (curve, events) = random_log(seed, steps);
                let tl = ingest(events.clone(), curve).unwrap();
                let logged: f64 = events.iter().filter_map(|e| e.fee_amount).sum();
                let mut attributed = 0.0;
                for seg in tl.segments_in(tl.span().unwrap()).unwrap() {
                    for id in tl.positions().keys() {
                        attributed += tl.fee_share_at(id, seg.t_start).unwrap()
                            * seg.fee_rate
                            * (seg.t_end - seg.t_start);
                    }
                }
                check(rel(attributed, logged) <= 1e-9, || format!("{attributed} vs {logged}"))
            })
            .map_err(|e| e.to_string()),
    );
    record(
        "window additivity",
        runner(PROPERTY_CASES)
            .run(&(any::<u64>(), 2usize..150, 0.0f64..1.0), |(seed, steps, u)| {
                let (curve, events) = random_log(seed, steps);
                let tl = ingest(events, curve).unwrap();
                let span = tl.span().unwrap();
                let mid = span.start + u * span.length();
                let whole = flair_aggregate(&tl, span).unwrap().value;
                let left = flair_aggregate(&tl, Window::new(span.start, mid)).unwrap().value;
                let right = flair_aggregate(&tl, Window::new(mid, span.end)).unwrap().value;
                check(rel(left + right, whole) < 1e-9, || format!("{left} + {right} vs {whole}"))
            })
            .map_err(|e| e.to_string()),
    );
    record(
        "capital scaling",
        runner(PROPERTY_CASES)
            .run(&(any::<u64>(), 2usize..150, 0.01f64..100.0), |(seed, steps, lambda)| {
                let (curve, events) = random_log(seed, steps);
                let tl = ingest(events.clone(), curve.clone()).unwrap();
                let scaled = ingest(scaled_log(&events, lambda), curve).unwrap();
                let span = tl.span().unwrap();
                let a = flair_aggregate(&tl, span).unwrap().value;
                let b = flair_aggregate(&scaled, span).unwrap().value;
                check(rel(b * lambda, a) < 1e-9, || format!("{} vs {a}", b * lambda))?;
                for id in tl.positions().keys() {
                    let a = flair_position(&tl, id, span).unwrap().value;
                    let b = flair_position(&scaled, id, span).unwrap().value;
                    check(rel(b * lambda, a) < 1e-9, || format!("{id}: {} vs {a}", b * lambda))?;
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    record(
        "lvr σ²",
        runner(PROPERTY_CASES)
            .run(&(any::<u64>(), 2usize..150, 0.0f64..3.0), |(seed, steps, sigma)| {
                let (curve, events) = random_log(seed, steps);
                let tl = ingest(events, curve).unwrap();
                let span = tl.span().unwrap();
                let one = lvr(&tl, Volatility::Fixed(sigma), span, false).unwrap().value;
                let two = lvr(&tl, Volatility::Fixed(2.0 * sigma), span, false).unwrap().value;
                check(two == 4.0 * one, || format!("{two} vs 4·{one}"))
            })
            .map_err(|e| e.to_string()),
    );
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("8 properties × {PROPERTY_CASES} cases")
        } else {
            failures.join("; ")
        },
    }
}

fn criterion_6() -> Outcome {
    let spec = ScenarioSpec::new(ScenarioKind::CfmmConstantPrice);
    let events = generate(&spec).unwrap();
    let w = Window::new(spec.t0, spec.t_end);
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, curve) in [
        ("cp", spec.curve().unwrap()),
        ("v3", CurveSpec::concentrated(spec.gamma, spec.tick_spacing).unwrap()),
    ] {
        let tl = ingest(events.clone(), curve).unwrap();
        let cm = |family| {
            evaluate_strategy(&tl, &StrategySpec::new(family, spec.capital), w, Volatility::Fixed(0.0))
                .unwrap()
                .cm
        };
        let full = cm(StrategyFamily::PassiveFullRange);
        let track = cm(StrategyFamily::TickTracking {
            width: 1,
            rebalance_interval: 1.0,
        });
        pass &= track >= full;
        notes.push(format!("{name}: tracking {track:.6} ≥ full {full:.6}"));
    }

    let gbm = ScenarioSpec {
        sigma: 0.5,
        seed: 42,
        ..ScenarioSpec::new(ScenarioKind::GbmPath)
    };
    let tl = timeline(&gbm);
    let grid = vec![
        StrategySpec::new(StrategyFamily::PassiveFullRange, gbm.capital),
        StrategySpec::new(
            StrategyFamily::TickTracking {
                width: 1,
                rebalance_interval: gbm.grid_step,
            },
            gbm.capital,
        ),
    ];
    let w = Window::new(gbm.t0, gbm.t_end);
    let noisy = optimize(&tl, &grid, w, Volatility::Realized).unwrap();
    let calm = optimize(&tl, &grid, w, Volatility::Fixed(0.0)).unwrap();
    let diverge = noisy.best_competitiveness_index != noisy.best_profitability_index;
    let agree = calm.best_competitiveness_index == calm.best_profitability_index;
    pass &= diverge && agree;
    notes.push(format!(
        "gbm σ=0.5 realized σ̂={:.3}: argmax cm = {}, argmax profit = {}; at σ=0 both = {}",
        noisy.sigma,
        noisy.best_competitiveness.family.name(),
        noisy.best_profitability.family.name(),
        calm.best_competitiveness.family.name()
    ));
    Outcome {
        pass,
        detail: notes.join("; "),
    }
}

/// Trapezoid rule for `f / V(t)` on the linear-price constant-product pool,
/// with `V(t) = n · 2L√p(t)`.
fn trapezoid_oracle(spec: &ScenarioSpec, points: usize) -> f64 {
    let level = spec.capital / (2.0 * spec.p_min.sqrt());
    let span = spec.t_end - spec.t0;
    let g = |u: f64| {
        let p = spec.p_min + (spec.p_max - spec.p_min) * u;
        spec.fee_rate / (spec.n as f64 * 2.0 * level * p.sqrt())
    };
    let h = 1.0 / points as f64;
    let inner: f64 = (1..points).map(|k| g(k as f64 * h)).sum();
    span * h * (0.5 * g(0.0) + inner + 0.5 * g(1.0))
}

fn criterion_7() -> Outcome {
    let base = ScenarioSpec::new(ScenarioKind::CfmmLinearPrice);
    let oracle = trapezoid_oracle(&base, 1 << 21);
    // The trapezoid's own error is second order; check it is negligible.
    let coarse_oracle = trapezoid_oracle(&base, 1 << 20);
    let oracle_err = rel(oracle, coarse_oracle) / 3.0;
    // And against the antiderivative of 1/√p.
    let level = base.capital / (2.0 * base.p_min.sqrt());
    let exact = base.fee_rate * (base.t_end - base.t0) / (base.n as f64 * 2.0 * level)
        * 2.0
        * (base.p_max.sqrt() - base.p_min.sqrt())
        / (base.p_max - base.p_min);
    let oracle_vs_exact = rel(oracle, exact);
    let errs: Vec<(usize, f64)> = [16384usize, 32768, 65536]
        .iter()
        .map(|&n| {
            let spec = ScenarioSpec {
                grid_step: (base.t_end - base.t0) / n as f64,
                ..base.clone()
            };
            (n, rel(cm_agg(&spec), oracle))
        })
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0].1 / w[1].1).log2()).collect();
    let last = errs.last().unwrap().1;
    Outcome {
        pass: last <= 1e-6 && orders.iter().all(|o| *o >= 0.9) && oracle_err < 1e-3 * last
            && oracle_vs_exact < 1e-12,
        detail: format!(
            "rel err {} ; observed order {}; oracle {oracle:.15} (own err ~{oracle_err:.1e}, vs antiderivative {oracle_vs_exact:.1e}); final {last:.2e} (tol 1e-6)",
            errs.iter()
                .map(|(n, e)| format!("N={n}: {e:.3e}"))
                .collect::<Vec<_>>()
                .join(", "),
            orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let bin = env!("CARGO_BIN_EXE_flair");
    let specs = [
        ("cfmm", r#"{"kind": "cfmm_constant_price"}"#),
        ("pair", r#"{"kind": "v3_fully_competitive_pair", "t_end": 100}"#),
        ("gbm", r#"{"kind": "gbm_path", "sigma": 0.4, "seed": 7}"#),
    ];
    let mut stdout = Vec::new();
    let mut flair = |args: Vec<String>| {
        let o = Command::new(bin).current_dir(dir).args(&args).output().unwrap();
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        stdout.extend(o.stdout);
    };
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    for (name, body) in specs {
        fs::write(dir.join(format!("{name}.json")), body).unwrap();
        flair(s(&["scenario", &format!("{name}.json"), "--out", "out"]));
        flair(s(&[
            "--config",
            &format!("out/{name}.run.json"),
            "ingest",
            &format!("out/{name}.jsonl"),
            "--out",
            "out",
        ]));
        flair(s(&[
            "flair",
            &format!("out/{name}.snapshot.json"),
            "--aggregate",
            "--out",
            &format!("out/{name}"),
        ]));
    }
    flair(s(&[
        "quadrant",
        "out/cfmm.snapshot.json",
        "out/pair.snapshot.json",
        "out/gbm.snapshot.json",
        "--out",
        "out",
    ]));
    let mut files = Vec::new();
    let mut stack = vec![dir.join("out")];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let name = p.strip_prefix(dir).unwrap().display().to_string();
                files.push((name, fs::read(&p).unwrap()));
            }
        }
    }
    files.push(("stdout".into(), stdout));
    files.sort();
    files
}

fn criterion_8() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline(a.path());
    let rb = pipeline(b.path());
    let differing: Vec<&str> = ra
        .iter()
        .zip(&rb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    Outcome {
        pass: ra.len() == rb.len() && differing.is_empty(),
        detail: if differing.is_empty() {
            format!("{} artefacts identical across two runs", ra.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    }
}

fn main() {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut results = Vec::new();
    let mut report = |id: u32, name: &str, run: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "{} {id}. {name} [{secs:.2}s]: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push(o.pass);
    };
    report(1, "constant-product oracle", &mut criterion_1);
    let mut reference = Vec::new();
    report(2, "fully competitive oracle", &mut || {
        let (o, v) = criterion_2();
        reference = v;
        o
    });
    report(3, "price invariance", &mut || criterion_3(&reference));
    report(4, "passive/competitive convergence", &mut || criterion_4(&reference));
    report(5, "property suite", &mut criterion_5);
    report(6, "backtest orderings", &mut criterion_6);
    report(7, "integration oracle", &mut criterion_7);
    report(8, "pipeline determinism", &mut criterion_8);
    let passed = results.iter().filter(|p| **p).count();
    println!("{passed}/{} criteria passed", results.len());
    if strict && passed != results.len() {
        std::process::exit(1);
    }
}
