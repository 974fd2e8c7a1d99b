//! End-to-end acceptance criteria, one summary line each.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use finsler_morse_harness::builtin;
use finsler_morse_harness::pipeline::{run_scenario, Assertion, Report};
use finsler_morse_harness::scenario::{Overrides, Scenario};
use finsler_morse_harness::suites::{run_suite, SuiteReport};

struct Outcome {
    pass: bool,
    detail: String,
}

fn line(id: usize, title: &str, o: &Outcome) {
    let mut out = std::io::stdout();
    let tag = if o.pass { "PASS" } else { "FAIL" };
    writeln!(out, "criterion {id:>2} [{tag}] {title}: {}", o.detail).unwrap();
}

fn run(s: Scenario) -> (Report, f64) {
    let t = Instant::now();
    let r = run_scenario(&s)
        .unwrap_or_else(|e| panic!("{}: {e}", s.name))
        .report;
    (r, t.elapsed().as_secs_f64())
}

fn passes(r: &Report, name: &str) -> bool {
    r.assertion(name).is_some_and(Assertion::pass)
}

fn suite(name: &str) -> (SuiteReport, f64) {
    let t = Instant::now();
    let r = run_suite(name, &Overrides::default()).unwrap();
    (r, t.elapsed().as_secs_f64())
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    let mut runs: BTreeMap<String, (Report, f64)> = BTreeMap::new();
    let single_end = [
        (builtin::sphere_point(2.5), 0),
        (builtin::sphere_point(4.0), 1),
        (builtin::sphere_point(7.0), 2),
        (builtin::euclid_circle_inward(0.5), 0),
        (builtin::euclid_circle_inward(1.5), 1),
        (builtin::euclid_sphere_inward(1.5), 2),
    ];
    let two_end = [
        builtin::point_to_circle_far(),
        builtin::point_to_circle_near(),
        builtin::center_to_circle(),
    ];
    for s in single_end
        .iter()
        .map(|p| p.0.clone())
        .chain(two_end.iter().cloned())
    {
        runs.insert(s.name.clone(), run(s));
    }

    // 1
    let mut ok = true;
    let mut detail = Vec::new();
    for (s, want) in &single_end {
        let (r, secs) = &runs[&s.name];
        let i = &r.indices;
        let good = passes(r, "index-agreement") && i.spectral.index == *want && *secs < 10.0;
        ok &= good;
        detail.push(format!(
            "{} ({},{},{})={} {:.2}s",
            s.name, i.spectral.index, i.focal_sum, i.broken.index, want, secs
        ));
    }
    results.push((
        1,
        "three-way index equality",
        Outcome {
            pass: ok,
            detail: detail.join("; "),
        },
    ));

    // 2
    let (index_sweep, secs) = suite("index-random");
    let r = &index_sweep;
    let ok = r.pass && r.total == 50 && secs < 300.0;
    results.push((
        2,
        "randomized index sweep",
        Outcome {
            pass: ok,
            detail: format!(
                "{}/{} in {:.1}s, {} rejected draws",
                r.passed,
                r.total,
                secs,
                r.rejections.len()
            ),
        },
    ));

    // 3
    let want = [(1, 0, 1, 0), (0, 0, 0, 0), (0, 0, 0, 1)];
    let mut ok = true;
    let mut detail = Vec::new();
    for (s, (pq_sub, pq, a, null)) in two_end.iter().zip(want) {
        let (r, secs) = &runs[&s.name];
        let w = r.indices.with_q.as_ref().unwrap();
        let a_idx = w.endpoint_form.map(|c| c.index);
        let good = w.spectral.index == pq_sub
            && r.indices.spectral.index == pq
            && a_idx == Some(a)
            && w.spectral.nullity == null
            && passes(r, "endpoint-decomposition")
            && *secs < 10.0;
        ok &= good;
        detail.push(format!(
            "{}: {} = {} + {:?}, nullity {} {:.2}s",
            s.name, w.spectral.index, r.indices.spectral.index, a_idx, w.spectral.nullity, secs
        ));
    }
    results.push((
        3,
        "endpoint decomposition",
        Outcome {
            pass: ok,
            detail: detail.join("; "),
        },
    ));

    // 4
    let (pb, _) = suite("normal-restriction");
    let det_ok = runs.values().all(|(r, _)| {
        r.assertions
            .iter()
            .filter(|a| a.name().starts_with("restricted"))
            .all(Assertion::pass)
            && r.assertion("restricted-index").is_some()
    });
    let rand_ok = pb.total == 20
        && pb.entries.iter().all(|e| {
            e.pass
                && e.assertions
                    .iter()
                    .any(|a| a.name().starts_with("restricted"))
        });
    results.push((
        4,
        "restricted equals unrestricted",
        Outcome {
            pass: det_ok && rand_ok,
            detail: format!(
                "{} deterministic scenarios {}, random {}/{}",
                runs.len(),
                det_ok,
                pb.passed,
                pb.total
            ),
        },
    ));

    // 5
    let sp = &runs["sphere-point-4"].0;
    let ci = &runs["euclid-circle-inward-1.5"].0;
    let s3 = &runs["sphere-in-r3-1.5"].0;
    let e_sphere = (sp.focal[0].t - PI).abs();
    let e_circle = (ci.focal[0].t - 1.0).abs();
    let ok = e_sphere <= 1e-6
        && e_circle <= 1e-6
        && s3.focal.len() == 1
        && s3.focal[0].multiplicity == 2;
    results.push((
        5,
        "focal locations",
        Outcome {
            pass: ok,
            detail: format!(
                "|t-pi|={e_sphere:.2e}, |t-1/k|={e_circle:.2e}, sphere-in-R3 multiplicity {}",
                s3.focal.first().map_or(0, |f| f.multiplicity)
            ),
        },
    ));

    // 6
    let (r, _) = suite("exp-jacobi");
    let worst = |name: &str| {
        r.entries
            .iter()
            .flat_map(|e| &e.assertions)
            .filter(|a| a.name() == name)
            .map(|a| match a {
                Assertion::AtMost { value, .. } => *value,
                Assertion::Near { value, target, .. } => (value - target).abs(),
                _ => f64::NAN,
            })
            .fold(0.0, f64::max)
    };
    results.push((
        6,
        "exponential differentials",
        Outcome {
            pass: r.pass,
            detail: format!(
                "{}/{}; max rel err D exp {:.1e}, D exp^LN {:.1e}; rank drop offset {:.1e}",
                r.passed,
                r.total,
                worst("exp-differential"),
                worst("normal-exp-differential"),
                worst("rank-drop-at-focal")
            ),
        },
    ));

    // 7
    let (r, _) = suite("symmetry");
    results.push((
        7,
        "identity residuals",
        Outcome {
            pass: r.pass && r.total == 200,
            detail: r.summary(),
        },
    ));

    // 8
    let d4 = sp.descent.as_ref().map(|d| d.value);
    let d15 = ci.descent.as_ref().map(|d| d.value);
    let ok = passes(sp, "descent-negative") && passes(ci, "descent-negative");
    results.push((
        8,
        "descent direction",
        Outcome {
            pass: ok,
            detail: format!("sphere-4 {d4:?}, circle-1.5 {d15:?}"),
        },
    ));

    // 9
    let (r, _) = suite("index-lemma");
    results.push((
        9,
        "index lemma",
        Outcome {
            pass: r.pass && r.total == 100,
            detail: r.summary(),
        },
    ));

    // 10
    let (r, _) = suite("kropina");
    let (kr, _) = run(builtin::kropina());
    results.push((
        10,
        "Kropina wind",
        Outcome {
            pass: r.pass && kr.indices.spectral.index == 0 && kr.focal.is_empty(),
            detail: format!("{}, index {}", r.summary(), kr.indices.spectral.index),
        },
    ));

    // 11
    let mesh_ok = |a: &[Assertion]| {
        let m: Vec<&Assertion> = a.iter().filter(|a| a.name().starts_with("mesh")).collect();
        !m.is_empty() && m.iter().all(|a| a.pass())
    };
    let det = runs.values().all(|(r, _)| mesh_ok(&r.assertions));
    let rnd = index_sweep
        .entries
        .iter()
        .chain(&pb.entries)
        .all(|e| mesh_ok(&e.assertions));
    results.push((
        11,
        "mesh robustness",
        Outcome {
            pass: det && rnd,
            detail: format!("N 256 -> 512: deterministic {det}, random {rnd}"),
        },
    ));

    for (id, title, o) in &results {
        line(*id, title, o);
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
