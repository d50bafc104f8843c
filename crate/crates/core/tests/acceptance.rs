//! Acceptance suite. Each test prints one `PASS`/`FAIL` line straight to
//! stderr (bypassing the harness capture) and then asserts its verdict.
//! Lines tagged `supplement` cover worked examples whose outcome is
//! recorded the same way.

use std::io::Write;
use std::sync::OnceLock;

use rand::Rng;

use isn_core::architectures::{
    ArchitectureTag, IsnModel, LogRatioEstimator, Model, ScoreEstimator, DEFAULT_HIDDEN,
};
use isn_core::datagen::generate_events;
use isn_core::inference::{mle_estimate, reweight, weighted_mean, SearchConfig};
use isn_core::losses::{check_variance_reduction, latentify, ratio_loss, LossKind};
use isn_core::nn::{DenseNet, Matrix, NetSpec, WeightGradients};
use isn_core::oracles::OracleModel;
use isn_core::rng::{seeded, StreamRng};
use isn_core::samplers::{KernelKind, KernelSpec, PriorSpec};
use isn_core::trainer_eval::{
    eval_avg_error, heatmap_points, median, pearson, run_study, train_instances, ArchChoice, Cell, EvalContext,
    Study, TaskId, TaskSpec,
};
use isn_core::Result;

const SEED: u64 = 1;

fn line(label: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[acceptance] {label}: {verdict} ({detail})");
}

fn verdict(label: &str, pass: bool, detail: String) {
    line(label, pass, &detail);
    assert!(pass, "{label}: {detail}");
}

fn desk_study() -> &'static Study {
    static STUDY: OnceLock<Study> = OnceLock::new();
    STUDY.get_or_init(|| {
        let specs: Vec<TaskSpec> = TaskId::ALL.into_iter().map(TaskSpec::desk).collect();
        let study = run_study(&specs, SEED).expect("desk study runs");
        let _ = write!(std::io::stderr(), "[acceptance] desk-scale matrix (median loss / error)\n{}", study.report.render());
        study
    })
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_1_oracle_floors() {
    let expected = [(TaskId::Kse, 15.515, 0.15), (TaskId::Klre, 0.680, 0.01), (TaskId::Carl, 0.415, 0.01)];
    let mut pass = true;
    let mut detail = Vec::new();
    for (id, want, tol) in expected {
        let ctx = EvalContext::new(TaskSpec::benchmark(id), SEED).unwrap();
        let ok = (ctx.floor.mean - want).abs() <= tol;
        pass &= ok;
        detail.push(format!("{} {:.4} ± {:.4} vs {want} ± {tol}", id.name(), ctx.floor.mean, ctx.floor.se));
    }
    verdict("criterion 1 oracle loss floors", pass, detail.join("; "));
}

// ---------------------------------------------------------------- 2

fn isn_of(m: Model<f64>) -> IsnModel<f64> {
    match m {
        Model::Isn(i) => i,
        _ => panic!("expected an ISN"),
    }
}

/// Pre-activations of every layer, computed directly from the weights.
fn pre_activations(net: &DenseNet<f64>, input: &[f64]) -> Vec<Vec<f64>> {
    let mut a = input.to_vec();
    let mut out = Vec::new();
    for l in net.layers() {
        let z: Vec<f64> = (0..l.out_dim)
            .map(|o| {
                let b = if l.bias_enabled { l.biases[o] } else { 0.0 };
                b + (0..l.in_dim).map(|i| l.weights[o * l.in_dim + i] * a[i]).sum::<f64>()
            })
            .collect();
        a = z.iter().map(|&v| l.activation.apply(v)).collect();
        out.push(z);
    }
    out
}

/// ∂output/∂input of a single-output network by plain reverse accumulation.
fn reverse_input_gradient(net: &DenseNet<f64>, input: &[f64]) -> Vec<f64> {
    let pre = pre_activations(net, input);
    let mut adj = vec![1.0];
    for (l, z) in net.layers().iter().zip(&pre).rev() {
        let dz: Vec<f64> = z.iter().zip(&adj).map(|(&z, &g)| g * l.activation.derivative(z)).collect();
        adj = (0..l.in_dim)
            .map(|i| (0..l.out_dim).map(|o| l.weights[o * l.in_dim + i] * dz[o]).sum())
            .collect();
    }
    adj
}

/// Largest violation of the six built-in relations over `n` random inputs.
fn identity_violation(m: &IsnModel<f64>, rng: &mut StreamRng, n: usize) -> [f64; 6] {
    let prior = PriorSpec::box_uniform(vec![0.5; 3], vec![5.0; 3]).unwrap();
    let mut worst = [0.0f64; 6];
    for _ in 0..n {
        let x = generate_events(OracleModel::Dirichlet3, &prior.sample(rng), 1, rng).unwrap().0[0].x.clone();
        let t: Vec<Vec<f64>> = (0..8).map(|_| prior.sample(rng)).collect();
        let l = |a: &[f64], b: &[f64]| m.log_ratio(&x, a, b).unwrap();
        // closed path through all eight points
        let loop_sum: f64 = (0..t.len()).map(|k| l(&t[k], &t[(k + 1) % t.len()])).sum();
        worst[0] = worst[0].max(loop_sum.abs());
        let r = l(&t[0], &t[1]).exp();
        worst[1] = worst[1].max(if r >= 0.0 && r.is_finite() { 0.0 } else { f64::INFINITY });
        worst[2] = worst[2].max((l(&t[0], &t[1]) + l(&t[1], &t[2]) - l(&t[0], &t[2])).abs());
        worst[3] = worst[3].max((l(&t[0], &t[1]) + l(&t[1], &t[0])).abs());
        worst[4] = worst[4].max(l(&t[3], &t[3]).abs());
        // ∇_Θ0 ln r̂ by reverse mode through the potential, against the
        // forward-mode score head
        let mut input = x.clone();
        input.extend_from_slice(&t[0]);
        let dphi = reverse_input_gradient(&m.net, &input);
        let s = m.score(&x, &t[0]).unwrap();
        for j in 0..3 {
            worst[5] = worst[5].max((dphi[3 + j] - s[j]).abs());
        }
    }
    worst
}

#[test]
fn criterion_2_isn_exact_identities() {
    let mut rng = seeded(2);
    let mut models = vec![
        ("random#1", IsnModel::<f64>::new(3, 3, &DEFAULT_HIDDEN, &mut seeded(21)).unwrap()),
        ("random#2", IsnModel::<f64>::new(3, 3, &DEFAULT_HIDDEN, &mut seeded(22)).unwrap()),
    ];
    for id in [TaskId::Kse, TaskId::Klre] {
        let mut spec = TaskSpec::desk(id);
        spec.n_train = 5_000;
        spec.train.epochs = 2;
        spec.n_seeds = 1;
        let trained = train_instances(&spec, ArchChoice::Isn, SEED).unwrap().remove(0).model;
        models.push((if id == TaskId::Kse { "trained-kse" } else { "trained-klre" }, isn_of(trained)));
    }
    let names = ["loop", "positivity", "transitivity", "inverse", "identity", "gradient"];
    let mut worst = [0.0f64; 6];
    for (_, m) in &models {
        let w = identity_violation(m, &mut rng, 1_000);
        for k in 0..6 {
            worst[k] = worst[k].max(w[k]);
        }
    }
    let pass = worst.iter().all(|&w| w <= 1e-12);
    let detail = names
        .iter()
        .zip(&worst)
        .map(|(n, w)| format!("{n} {w:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        "criterion 2 ISN exact identities",
        pass,
        format!("max abs over 1000 inputs × {} networks: {detail}; bound 1e-12", models.len()),
    );
}

// ---------------------------------------------------------------- 3

const KINK_MARGIN: f64 = 1e-2;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
}

fn random_net(rng: &mut StreamRng, out: usize) -> DenseNet<f64> {
    let spec = NetSpec::mlp(6, &DEFAULT_HIDDEN, out, true);
    let mut net = DenseNet::<f64>::lecun_normal(&spec, rng).unwrap();
    for l in net.layers_mut() {
        for b in &mut l.biases {
            *b = rng.random_range(-0.3..0.3);
        }
    }
    net
}

/// SELU has a derivative jump at 0; central differences are only
/// meaningful away from it.
fn kink_free_input(net: &DenseNet<f64>, rng: &mut StreamRng, skipped: &mut usize) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.5..1.5)).collect();
        let pre = pre_activations(net, &x);
        let n = pre.len();
        if pre[..n - 1].iter().flatten().all(|z| z.abs() > KINK_MARGIN) {
            return x;
        }
        *skipped += 1;
    }
}

fn fd_over_params(net: &DenseNet<f64>, loss: impl Fn(&DenseNet<f64>) -> f64, h: f64) -> Vec<f64> {
    let p = net.params_flat();
    let mut probe = net.clone();
    (0..p.len())
        .map(|i| {
            let mut q = p.clone();
            q[i] = p[i] + h;
            probe.set_params_flat(&q).unwrap();
            let up = loss(&probe);
            q[i] = p[i] - h;
            probe.set_params_flat(&q).unwrap();
            (up - loss(&probe)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn criterion_3_gradient_correctness() {
    let mut rng = seeded(3);
    let h = 1e-4;
    let (mut w_weights, mut w_jac, mut w_through) = (0.0f64, 0.0f64, 0.0f64);
    let nets = 12;
    let mut skipped = 0;
    for k in 0..nets {
        // weights, on a two-output head
        let net = random_net(&mut rng, 2);
        let x = kink_free_input(&net, &mut rng, &mut skipped);
        let c = [0.7, -1.3];
        let loss = |n: &DenseNet<f64>| {
            let o = n.forward(&x).unwrap();
            c[0] * o[0] + c[1] * o[1] * o[1]
        };
        let o = net.forward(&x).unwrap();
        let g = net.backward(&x, &[c[0], 2.0 * c[1] * o[1]]).unwrap().flatten();
        for (a, b) in g.iter().zip(fd_over_params(&net, loss, h)) {
            w_weights = w_weights.max(rel(*a, b));
        }

        // Θ-Jacobian of a potential
        let net = random_net(&mut rng, 1);
        let x = kink_free_input(&net, &mut rng, &mut skipped);
        let (_, jac) = net.forward_with_input_gradient(&x, 3..6).unwrap();
        for j in 0..3 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[3 + j] += h;
            xm[3 + j] -= h;
            let fd = (net.forward(&xp).unwrap()[0] - net.forward(&xm).unwrap()[0]) / (2.0 * h);
            w_jac = w_jac.max(rel(jac.get(0, j), fd));
        }

        // weights through the Jacobian
        let target = [0.3, -0.2, 0.5 + 0.1 * k as f64];
        let loss = |n: &DenseNet<f64>| {
            let (v, j) = n.forward_with_input_gradient(&x, 3..6).unwrap();
            j.data.iter().zip(&target).map(|(a, t)| (a - t) * (a - t)).sum::<f64>() + 0.5 * v[0]
        };
        let up = Matrix::from_rows(1, 3, jac.data.iter().zip(&target).map(|(a, t)| 2.0 * (a - t)).collect()).unwrap();
        let mut g = WeightGradients::zeros_like(&net);
        net.backward_augmented(&x, 3..6, &[0.5], &up, &mut g).unwrap();
        for (a, b) in g.flatten().iter().zip(fd_over_params(&net, loss, h)) {
            w_through = w_through.max(rel(*a, b));
        }
    }
    let pass = w_weights <= 1e-5 && w_jac <= 1e-5 && w_through <= 1e-4;
    verdict(
        "criterion 3 gradient correctness",
        pass,
        format!(
            "{nets} networks, {skipped} inputs redrawn near an activation kink; worst relative error weights {w_weights:.1e} (≤1e-5), Θ-Jacobian {w_jac:.1e} (≤1e-5), through-Jacobian {w_through:.1e} (≤1e-4)"
        ),
    );
}

// ---------------------------------------------------------------- 4

fn pdf(x: f64, m: f64) -> f64 {
    (-0.5 * (x - m) * (x - m)).exp()
}

/// E[y | x, θ] for the ±λ kernel: posterior-weighted ±1/λ.
fn ksa_oracle(x: f64, t: f64, l: f64) -> f64 {
    let (a, b) = (pdf(x, t + l), pdf(x, t - l));
    (a - b) / (a + b) / l
}

/// Largest |z| and χ²/dof of binned means of y against binned means of the
/// oracle s_KSA, plus the same statistic against the true score.
fn binned_check(lambda: f64, n: usize, seed: u64) -> (f64, f64, f64) {
    let mut spec = TaskSpec::benchmark(TaskId::Kse);
    spec.oracle = OracleModel::Gaussian1d;
    spec.prior = PriorSpec::box_uniform(vec![-1.0], vec![1.0]).unwrap();
    spec.kernel = KernelSpec::constant(KernelKind::Delta, vec![lambda]).unwrap();
    let data = spec.generate(n, &mut seeded(seed)).unwrap().0;
    let (tb, xb) = (10usize, 30usize);
    let (x_lo, x_hi) = (-3.0, 3.0);
    // per bin: count, Σy, Σy², Σ s_KSA, Σ s
    let mut acc = vec![[0.0f64; 5]; tb * xb];
    for ex in data.as_score().unwrap() {
        let (x, t, y) = (ex.x[0], ex.theta[0], ex.y[0]);
        if !(x_lo..x_hi).contains(&x) {
            continue;
        }
        let i = (((t + 1.0) / 2.0 * tb as f64) as usize).min(tb - 1);
        let j = (((x - x_lo) / (x_hi - x_lo) * xb as f64) as usize).min(xb - 1);
        let a = &mut acc[i * xb + j];
        a[0] += 1.0;
        a[1] += y;
        a[2] += y * y;
        a[3] += ksa_oracle(x, t, lambda);
        a[4] += x - t;
    }
    let (mut zmax, mut chi, mut chi_s, mut dof) = (0.0f64, 0.0, 0.0, 0.0);
    for a in acc.iter().filter(|a| a[0] >= 200.0) {
        let m = a[1] / a[0];
        let var = a[2] / a[0] - m * m;
        let se = (var / a[0]).sqrt();
        let z = (m - a[3] / a[0]) / se;
        let zs = (m - a[4] / a[0]) / se;
        zmax = zmax.max(z.abs());
        chi += z * z;
        chi_s += zs * zs;
        dof += 1.0;
    }
    (zmax, chi / dof, chi_s / dof)
}

/// RMS of s_KSA − s under x ~ N(θ, 1), θ ~ U[−1, 1].
fn ksa_bias(lambda: f64) -> f64 {
    let mut rng = seeded(44);
    let n = 200_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let t: f64 = rng.random_range(-1.0..1.0);
        let x = isn_core::oracles::gaussian1d_sample(t, &mut rng);
        acc += (ksa_oracle(x, t, lambda) - (x - t)).powi(2);
    }
    (acc / n as f64).sqrt()
}

#[test]
fn criterion_4_ksa_correctness() {
    let runs: Vec<(f64, (f64, f64, f64))> =
        [(0.5, 41), (0.25, 42), (0.1, 43)].into_iter().map(|(l, seed)| (l, binned_check(l, 1_000_000, seed))).collect();
    let lib_agrees = [(1.3, 0.2, 0.5), (-2.1, 0.7, 0.25), (0.0, -0.4, 0.1)]
        .iter()
        .all(|&(x, t, l)| (isn_core::oracles::gaussian1d_ksa_closed_form(x, t, l) - ksa_oracle(x, t, l)).abs() < 1e-12);
    // bias at the reference point x = 1, θ = 0
    let at = |l: f64| (ksa_oracle(1.0, 0.0, l) - 1.0).abs();
    let factor = at(0.5) / at(0.25);
    let (r1, r2) = (ksa_bias(0.5), ksa_bias(0.25));
    // a few hundred populated bins: |z| < 4.5 and χ²/dof within [0.7, 1.3]
    let fits = runs.iter().all(|(_, (z, c, _))| *z < 4.5 && (0.7..=1.3).contains(c));
    let pass = fits && lib_agrees && (3.0..=5.0).contains(&factor);
    let per_lambda = runs
        .iter()
        .map(|(l, (z, c, cs))| format!("λ={l}: max|z| {z:.2}, χ²/dof {c:.3} (against the true score {cs:.1})"))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(
        "criterion 4 KSA correctness",
        pass,
        format!(
            "{per_lambda}; closed form matches pdf ratio: {lib_agrees}; |s_KSA − s| at x=1, θ=0: {:.4} → {:.4}, \
             factor {factor:.2} (in [3,5]); RMS over the prior {r1:.4} → {r2:.4} (×{:.2})",
            at(0.5),
            at(0.25),
            r1 / r2
        ),
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_5_latent_loss_guarantees() {
    let net = DenseNet::<f64>::lecun_normal(&NetSpec::mlp(2, &[4], 1, false), &mut seeded(51)).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for base in [LossKind::Logistic, LossKind::Square, LossKind::Exponential, LossKind::Savage, LossKind::Rolr] {
        let rep = check_variance_reduction(
            base,
            &net,
            1,
            |r: &mut StreamRng| (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)),
            100_000,
            &mut seeded(52),
        )
        .unwrap();
        pass &= rep.means_agree && rep.variance_not_larger;
        detail.push(format!(
            "{}: mean {:.4}/{:.4} var {:.4}→{:.4}",
            base.name(),
            rep.mean_base,
            rep.mean_latent,
            rep.var_base,
            rep.var_latent
        ));
    }
    // latentify(logistic) against the written-out ALICE loss
    let alice = latentify(LossKind::Logistic).unwrap();
    let mut rng = seeded(53);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let r_hat: f64 = rng.random_range(-4.0f64..4.0).exp();
        let r_lat: f64 = rng.random_range(-4.0f64..4.0).exp();
        let direct = -1.0 / (1.0 + r_lat) * (1.0 / (1.0 + r_hat)).ln()
            - r_lat / (1.0 + r_lat) * (r_hat / (1.0 + r_hat)).ln();
        let got = ratio_loss(alice, r_hat.ln(), 0.0, Some(r_lat)).unwrap().value;
        let soft = ratio_loss(LossKind::Logistic, r_hat.ln(), 1.0 / (1.0 + r_lat), None).unwrap().value;
        worst = worst.max((got - direct).abs() / direct.abs().max(1.0));
        worst = worst.max((soft - got).abs() / got.abs().max(1.0));
    }
    let machine = worst <= 1e-14 && alice == LossKind::Alice;
    pass &= machine;
    detail.push(format!("latentify(logistic) = {} with worst relative gap {worst:.1e}", alice.name()));
    verdict("criterion 5 latent-loss guarantees", pass, detail.join("; "));
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_6_desk_scale_training() {
    let study = desk_study();
    let r = &study.report;

    // (a) every evaluated instance against its floor, paired standard error
    let mut a_pass = true;
    let mut worst = f64::INFINITY;
    let mut finite = true;
    for row in &r.rows {
        for cell in &row.cells {
            if let Cell::Evaluated(rep) = cell {
                for m in &rep.instances {
                    let z = m.excess_loss.mean / m.excess_loss.se.max(f64::MIN_POSITIVE);
                    worst = worst.min(z);
                    a_pass &= m.excess_loss.mean >= -3.0 * m.excess_loss.se;
                    finite &= m.avg_error.mean.is_finite() && m.avg_loss.mean.is_finite();
                }
            }
        }
    }
    let own = |t: TaskId, a: ArchChoice| r.cell(t, t, a).and_then(Cell::report).unwrap();
    finite &= own(TaskId::Kse, ArchChoice::Isn).instances.len() == 5;

    // (b) score error ordering
    let (isn, dir) = (own(TaskId::Kse, ArchChoice::Isn), own(TaskId::Kse, ArchChoice::Direct));
    let se = |rep: &isn_core::trainer_eval::EvalReport| {
        (rep.instances.iter().map(|m| m.avg_error.se.powi(2)).sum::<f64>() / rep.instances.len() as f64).sqrt()
    };
    let combined = (se(isn).powi(2) + se(dir).powi(2)).sqrt();
    let b_pass = isn.median_error < dir.median_error || isn.median_error - dir.median_error <= combined;

    // (c) extrapolation from correlated to independent pairs
    let err = |eval: TaskId, arch: ArchChoice| r.cell(eval, TaskId::Klre, arch).and_then(Cell::report).unwrap().median_error;
    let f_dir = err(TaskId::Carl, ArchChoice::Direct) / err(TaskId::Klre, ArchChoice::Direct);
    let f_isn = err(TaskId::Carl, ArchChoice::Isn) / err(TaskId::Klre, ArchChoice::Isn);
    let c_pass = f_dir >= 2.0 && f_isn < f_dir;

    let pass = a_pass && b_pass && c_pass && finite;
    verdict(
        "criterion 6 desk-scale training",
        pass,
        format!(
            "(a) {} worst paired z {worst:.2}; (b) {} KSE error ISN {:.4} vs direct {:.4} (1 SE {combined:.4}); \
             (c) {} KLRE-trained error growth carl/klre direct ×{f_dir:.2}, ISN ×{f_isn:.2}; finite 5-instance metrics {finite}",
            if a_pass { "ok" } else { "violated" },
            if b_pass { "ok" } else { "violated" },
            isn.median_error,
            dir.median_error,
            if c_pass { "ok" } else { "violated" },
        ),
    );
}

#[test]
fn supplement_trained_score_heatmap_correlation() {
    let study = desk_study();
    let set = study
        .sets
        .iter()
        .find(|s| s.trained_on == TaskId::Kse && s.architecture == ArchChoice::Isn)
        .unwrap();
    let ctx = &study.contexts[0];
    let points = heatmap_points(&set.models[0], &ctx.spec, &ctx.error_set).unwrap();
    let per: Vec<f64> = (0..3)
        .map(|c| {
            let v: Vec<(f64, f64)> = points.iter().filter(|p| p.0 == c).map(|p| (p.1, p.2)).collect();
            pearson(&v)
        })
        .collect();
    let pass = per.iter().all(|&c| c > 0.7);
    verdict(
        "supplement heatmap correlation of a trained KSE ISN",
        pass,
        format!("Pearson per component {per:.3?} (> 0.7)"),
    );
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_7_downstream_inference() {
    let prior = PriorSpec::box_uniform(vec![0.5; 3], vec![5.0; 3]).unwrap();
    let truth = [1.5, 3.0, 5.0];
    let (ev, _) = generate_events(OracleModel::Dirichlet3, &truth, 10_000, &mut seeded(71)).unwrap();
    let x: Vec<Vec<f64>> = ev.into_iter().map(|e| e.x).collect();
    let est = mle_estimate(&OracleModel::Dirichlet3, &x, &prior.center(), &prior, &SearchConfig::default()).unwrap();
    let mle_ok = est.theta.iter().zip(&truth).all(|(a, b)| (a - b).abs() < 0.1);

    let (t0, t1) = ([1.0, 2.0, 2.0], [3.0, 3.0, 3.0]);
    let (ev, _) = generate_events(OracleModel::Dirichlet3, &t0, 100_000, &mut seeded(72)).unwrap();
    let x0: Vec<Vec<f64>> = ev.into_iter().map(|e| e.x).collect();
    let w = reweight(&OracleModel::Dirichlet3, &x0, &t0, &t1).unwrap();
    let (m, se) = weighted_mean(&x0, &w).unwrap();
    let rw_ok = (0..3).all(|j| (m[j] - 1.0 / 3.0).abs() <= 3.0 * se[j]);

    verdict(
        "criterion 7 downstream inference",
        mle_ok && rw_ok,
        format!(
            "MLE {:.3?} vs {truth:?} (tol 0.1); reweighted mean {m:.4?} ± {se:.4?} vs 1/3 (3σ)",
            est.theta
        ),
    );
}

#[test]
fn supplement_mle_error_shrinks_with_sample_size() {
    let prior = PriorSpec::box_uniform(vec![0.5; 3], vec![5.0; 3]).unwrap();
    let truth = [1.5, 3.0, 5.0];
    let reps = 20;
    let median_error = |n: usize| -> f64 {
        let errs: Vec<f64> = (0..reps)
            .map(|k| {
                let (ev, _) = generate_events(OracleModel::Dirichlet3, &truth, n, &mut seeded(700 + k as u64 + n as u64)).unwrap();
                let x: Vec<Vec<f64>> = ev.into_iter().map(|e| e.x).collect();
                let est = mle_estimate(&OracleModel::Dirichlet3, &x, &prior.center(), &prior, &SearchConfig::default()).unwrap();
                est.theta.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        median(&errs)
    };
    let (e3, e4) = (median_error(1_000), median_error(10_000));
    verdict(
        "supplement MLE consistency",
        e4 <= e3,
        format!("median |Θ̂ − Θ_true| over {reps} repetitions: N=1e3 {e3:.4}, N=1e4 {e4:.4}"),
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_8_parameter_counts() {
    let mut rng = seeded(8);
    let counts: Vec<usize> = [ArchitectureTag::Isn, ArchitectureTag::DirectScore, ArchitectureTag::DirectRatio]
        .into_iter()
        .map(|t| Model::<f64>::new(t, 3, 3, &DEFAULT_HIDDEN, &mut rng).unwrap().num_params())
        .collect();
    verdict("criterion 8 parameter counts", counts == [344, 363, 378], format!("{counts:?} vs [344, 363, 378]"));
}

// ---------------------------------------------------------------- worked examples

struct ZeroScore;

impl ScoreEstimator for ZeroScore {
    fn predict_score(&self, _x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; theta.len()])
    }
}

impl LogRatioEstimator for ZeroScore {
    fn predict_log_ratio(&self, _x: &[f64], _t0: &[f64], _t1: &[f64]) -> Result<f64> {
        Ok(0.0)
    }
}

#[test]
fn supplement_zero_score_error_matches_floor_arithmetic() {
    let ctx = EvalContext::new(TaskSpec::benchmark(TaskId::Kse), SEED).unwrap();
    let e = eval_avg_error(&ZeroScore, &ctx.spec, &ctx.error_set).unwrap();
    let pass = (e.mean - 0.485).abs() <= 0.05 * 0.485;
    verdict(
        "supplement constant-zero score error ≈ 0.485",
        pass,
        format!("avg_error {:.4} ± {:.4}; 16 − floor = {:.4}", e.mean, e.se, 16.0 - ctx.floor.mean),
    );
}

#[test]
fn supplement_gaussian_kse_isn_fit() {
    let mut spec = TaskSpec::benchmark(TaskId::Kse);
    spec.oracle = OracleModel::Gaussian1d;
    spec.prior = PriorSpec::box_uniform(vec![-1.0], vec![1.0]).unwrap();
    spec.kernel = KernelSpec::constant(KernelKind::Delta, vec![0.1]).unwrap();
    spec.n_train = 50_000;
    spec.n_seeds = 1;
    let model = train_instances(&spec, ArchChoice::Isn, SEED).unwrap().remove(0).model;
    let held_out = spec.generate(20_000, &mut seeded(99)).unwrap().0;
    let e = eval_avg_error(&model, &spec, &held_out).unwrap();
    verdict(
        "supplement Gaussian KSE ISN held-out error < 0.05",
        e.mean < 0.05,
        format!("mean |ŝ − s|² {:.4} ± {:.4} (λ=0.1, n=5·10^4, default protocol)", e.mean, e.se),
    );
}
