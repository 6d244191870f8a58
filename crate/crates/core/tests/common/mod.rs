//! Independent reference implementations shared by the integration tests
//! and the acceptance harness.

#![allow(dead_code)]

use lingocl::clmethods::{feat_distill_grad, feat_distill_penalty, EwcState};
use lingocl::numcore::{compute_gradients, Activation, EncoderModel, Objective, Similarity, Tensor2D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------- metrics ----------

/// `a[i][j]` for `i <= j`, 0-based, plain loops over the textbook formulas.
pub fn loop_last(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for row in a.iter().take(n) {
        s += row[n - 1];
    }
    s / n as f64
}

pub fn loop_avg(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut total = 0.0;
    for j in 0..n {
        let mut inner = 0.0;
        for row in a.iter().take(j + 1) {
            inner += row[j];
        }
        total += inner / (j + 1) as f64;
    }
    total / n as f64
}

pub fn loop_forget(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut total = 0.0;
    for row in a.iter().take(n - 1) {
        let mut best = f64::NEG_INFINITY;
        for &v in row.iter().take(n - 1) {
            if v.is_finite() && v > best {
                best = v;
            }
        }
        total += best - row[n - 1];
    }
    total / (n - 1) as f64
}

/// Random task-by-step accuracy table: `a[i][j]` finite for `i <= j`,
/// NaN elsewhere.
pub fn random_accuracy(rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i <= j { rng.random::<f64>() } else { f64::NAN }).collect())
        .collect()
}

/// Per-step rows (`steps[j][i] = a[i][j]`) as consumed by the library.
pub fn to_steps(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n).map(|j| (0..=j).map(|i| a[i][j]).collect()).collect()
}

// ---------- eigen / drift ----------

/// Cyclic Jacobi eigensolver for a symmetric matrix. Returns eigenvalues and
/// eigenvectors as columns of `v` (`v[row][col]`).
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[i][j] * a[i][j];
                }
            }
        }
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Drift via explicit loops: center, Gram, Jacobi, top-k, Frobenius overlap.
pub fn oracle_drift(f: &[Vec<f64>], g: &[Vec<f64>], k: usize, centered: bool) -> f64 {
    let top = |x: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let n = x.len();
        let d = x[0].len();
        let mut m = x.to_vec();
        if centered {
            for c in 0..d {
                let mean: f64 = (0..n).map(|r| x[r][c]).sum::<f64>() / n as f64;
                for row in m.iter_mut() {
                    row[c] -= mean;
                }
            }
        }
        let mut gram = vec![vec![0.0; d]; d];
        for a in 0..d {
            for b in 0..d {
                for row in &m {
                    gram[a][b] += row[a] * row[b];
                }
            }
        }
        let (vals, vecs) = jacobi_eigen(gram);
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
        idx[..k]
            .iter()
            .map(|&c| (0..d).map(|r| vecs[r][c]).collect())
            .collect()
    };
    let va = top(f);
    let vb = top(g);
    let mut fro = 0.0;
    for a in &va {
        for b in &vb {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            fro += dot * dot;
        }
    }
    1.0 - fro / k as f64
}

pub fn to_tensor(rows: &[Vec<f64>]) -> Tensor2D {
    Tensor2D::from_rows(rows).unwrap()
}

pub fn gaussian_rows(rng: &mut impl Rng, n: usize, d: usize, scales: &[f64]) -> Vec<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    (0..n)
        .map(|_| {
            (0..d)
                .map(|c| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * scales[c % scales.len()]
                })
                .collect()
        })
        .collect()
}

// ---------- herding ----------

/// Greedy herding by exhaustively scoring every candidate at every step.
pub fn exhaustive_herding(points: &[Vec<f64>], m: usize) -> Vec<usize> {
    let n = points.len();
    let d = points[0].len();
    let mu: Vec<f64> = (0..d).map(|c| points.iter().map(|p| p[c]).sum::<f64>() / n as f64).collect();
    let mut chosen: Vec<usize> = Vec::new();
    for _ in 0..m {
        let mut best = (usize::MAX, f64::INFINITY);
        for cand in 0..n {
            if chosen.contains(&cand) {
                continue;
            }
            let mut set = chosen.clone();
            set.push(cand);
            let dist: f64 = (0..d)
                .map(|c| {
                    let mean = set.iter().map(|&i| points[i][c]).sum::<f64>() / set.len() as f64;
                    (mu[c] - mean).powi(2)
                })
                .sum();
            if dist < best.1 {
                best = (cand, dist);
            }
        }
        chosen.push(best.0);
    }
    chosen
}

// ---------- gradients ----------

/// Smallest |pre-activation| of any relu unit over the batch.
pub fn min_relu_margin(model: &EncoderModel, x: &Tensor2D) -> f64 {
    let mut margin = f64::INFINITY;
    for row in x.row_iter() {
        let mut h = row.to_vec();
        for layer in model.layers() {
            let mut next = layer.bias.clone();
            for (j, out) in next.iter_mut().enumerate() {
                for (i, hi) in h.iter().enumerate() {
                    *out += hi * layer.weight.get(i, j);
                }
            }
            if layer.activation == Activation::Relu {
                margin = next.iter().fold(margin, |m, v| m.min(v.abs()));
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = next;
        }
    }
    margin
}

/// Relative error, with a floor so that entries at the finite-difference
/// noise level (about 1e-10 here) are compared absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

/// Worst relative error between analytic and central-difference gradients
/// over every parameter of one random configuration. `None` when the draw
/// is degenerate: a relu pre-activation within 1e-3 of its kink, where a
/// central difference straddles two linear pieces, or a feature row that
/// is (nearly) zero, which cosine logits reject.
pub fn gradient_check(seed: u64) -> Option<f64> {
    let mut r = rng(seed);
    let input = r.random_range(2..6);
    let hidden: Vec<usize> = (0..r.random_range(0..3)).map(|_| r.random_range(2..7)).collect();
    let out = r.random_range(2..6);
    let classes = r.random_range(2..6);
    let batch = r.random_range(1..7);
    let model = EncoderModel::mlp(input, &hidden, out, &mut r).unwrap();
    let head = to_tensor(&gaussian_rows(&mut r, classes, out, &[1.0]));
    let x = to_tensor(&gaussian_rows(&mut r, batch, input, &[1.5]));
    let labels: Vec<usize> = (0..batch).map(|_| r.random_range(0..classes)).collect();
    let objective = Objective {
        similarity: if r.random_bool(0.5) { Similarity::Cosine } else { Similarity::Inner },
        scale: r.random_range(0.5..16.0),
    };
    if min_relu_margin(&model, &x) < 1e-3 {
        return None;
    }
    let features = model.forward(&x).ok()?;
    if features.row_iter().any(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-3) {
        return None;
    }
    let eps = 1e-5;
    let grads = compute_gradients(&model, &head, &x, &labels, objective).ok()?;
    let mut worst: f64 = 0.0;

    let loss_at = |m: &EncoderModel, h: &Tensor2D| compute_gradients(m, h, &x, &labels, objective).unwrap().loss;
    let params = model.params_flat();
    for (i, &g) in grads.encoder.iter().enumerate() {
        let mut plus = model.clone();
        let mut p = params.clone();
        p[i] += eps;
        plus.set_params_flat(&p).unwrap();
        let mut minus = model.clone();
        p[i] -= 2.0 * eps;
        minus.set_params_flat(&p).unwrap();
        let fd = (loss_at(&plus, &head) - loss_at(&minus, &head)) / (2.0 * eps);
        worst = worst.max(rel_err(g, fd));
    }
    for i in 0..head.data().len() {
        let mut hp = head.clone();
        hp.data_mut()[i] += eps;
        let mut hm = head.clone();
        hm.data_mut()[i] -= eps;
        let fd = (loss_at(&model, &hp) - loss_at(&model, &hm)) / (2.0 * eps);
        worst = worst.max(rel_err(grads.head.data()[i], fd));
    }

    // feature distillation w.r.t. current features
    let cur = to_tensor(&gaussian_rows(&mut r, batch, out, &[1.0]));
    let old = to_tensor(&gaussian_rows(&mut r, batch, out, &[1.0]));
    let g = feat_distill_grad(&cur, &old).unwrap();
    for i in 0..cur.data().len() {
        let mut p = cur.clone();
        p.data_mut()[i] += eps;
        let mut m = cur.clone();
        m.data_mut()[i] -= eps;
        let fd = (feat_distill_penalty(&p, &old).unwrap() - feat_distill_penalty(&m, &old).unwrap()) / (2.0 * eps);
        worst = worst.max(rel_err(g.data()[i], fd));
    }

    // EWC penalty w.r.t. parameters
    let n = params.len();
    let anchor: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let fisher: Vec<f64> = (0..n).map(|_| r.random_range(0.0..2.0)).collect();
    let ewc = EwcState::new(anchor, fisher, r.random_range(0.1..100.0)).unwrap();
    let g = ewc.gradient(&params);
    for i in 0..n {
        let mut p = params.clone();
        p[i] += eps;
        let up = ewc.penalty(&p);
        p[i] -= 2.0 * eps;
        let down = ewc.penalty(&p);
        worst = worst.max(rel_err(g[i], (up - down) / (2.0 * eps)));
    }
    Some(worst)
}

/// Runs `gradient_check` on successive seeds until `count` valid
/// configurations were checked; returns the worst error and seeds consumed.
pub fn gradient_suite(count: usize) -> (f64, u64) {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut seed = 0;
    while checked < count {
        if let Some(e) = gradient_check(seed) {
            worst = worst.max(e);
            checked += 1;
        }
        seed += 1;
    }
    (worst, seed)
}

/// A four-task stream small enough to train in well under a second.
pub const SMALL_TOML: &str = r#"
name = "small"
seeds = [0, 1]
regime = "semantic_frozen"

[protocol]
kind = "class_il"
initial_classes = 6
increment = 2

[data.synthetic]
superclasses = 4
classes_per_superclass = 3
input_dim = 12
sigma_super = 1.0
sigma_class = 0.6
sigma_sample = 0.8
train_per_class = 20
test_per_class = 10

[model]
hidden = [32]
dim = 16

[oracle]
hidden = [32]
dim = 16
epochs = 3

[training]
epochs = 3
batch_size = 16
methods = ["finetune", "rehearsal"]
memory_per_class = 4
fisher_samples = 30

[analysis]
drift_k = 4
correlation_classes = 12
"#;

pub fn small_config(output_dir: &std::path::Path) -> lingocl::runner::ExperimentConfig {
    let mut c = lingocl::runner::ExperimentConfig::from_toml(SMALL_TOML).expect("small config parses");
    c.output_dir = output_dir.to_path_buf();
    c
}
