mod common;

use common::*;
use lingocl::clmethods::{herding_order, project_gradient};
use lingocl::metrics::{
    avg_incremental_accuracy, forgetting_rate, last_accuracy, repre_drift, AccuracyMatrix,
};
use lingocl::numcore::{similarity_logits, EncoderModel, Similarity, Tensor2D};
use lingocl::Error;
use rand::Rng;

#[test]
fn metrics_match_loop_oracle_exactly() {
    let mut r = rng(7);
    for _ in 0..200 {
        let n = r.random_range(1..9);
        let a = random_accuracy(&mut r, n);
        let m = AccuracyMatrix::from_steps(&to_steps(&a)).unwrap();
        assert_eq!(last_accuracy(&m).unwrap(), loop_last(&a));
        assert_eq!(avg_incremental_accuracy(&m).unwrap(), loop_avg(&a));
        if n >= 2 {
            assert_eq!(forgetting_rate(&m).unwrap(), loop_forget(&a));
        } else {
            assert!(matches!(forgetting_rate(&m), Err(Error::Undefined(_))));
        }
    }
}

#[test]
fn late_improvement_gives_negative_forgetting() {
    let m = AccuracyMatrix::from_steps(&[vec![0.5], vec![0.6, 0.8], vec![0.9, 0.7, 0.9]]).unwrap();
    assert!(forgetting_rate(&m).unwrap() < 0.0);
}

#[test]
fn drift_matches_jacobi_pipeline() {
    let mut r = rng(11);
    for trial in 0..50 {
        let d = r.random_range(3..8);
        let n = r.random_range(d + 2..3 * d + 4);
        let k = r.random_range(1..d);
        let scales: Vec<f64> = (0..d).map(|i| 3.0 / (1.0 + i as f64)).collect();
        let f = gaussian_rows(&mut r, n, d, &scales);
        let g = gaussian_rows(&mut r, n, d, &scales.iter().rev().copied().collect::<Vec<_>>());
        for centered in [true, false] {
            let ours = repre_drift(&to_tensor(&f), &to_tensor(&g), k, centered).unwrap();
            let oracle = oracle_drift(&f, &g, k, centered);
            assert!((ours - oracle).abs() < 1e-8, "trial {trial}: {ours} vs {oracle}");
        }
    }
}

#[test]
fn drift_is_invariant_under_shared_rotation_and_symmetric() {
    let mut r = rng(12);
    let f = gaussian_rows(&mut r, 30, 4, &[4.0, 2.0, 1.0, 0.5]);
    let g = gaussian_rows(&mut r, 30, 4, &[1.0, 3.0, 2.0, 0.3]);
    // orthogonal Q from Gram-Schmidt of a random matrix
    let q = lingocl::supervision::orthogonalize(&gaussian_rows(&mut r, 4, 4, &[1.0]), &mut r).unwrap();
    let rotate = |x: &[Vec<f64>]| -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| (0..4).map(|c| (0..4).map(|k| row[k] * q[k][c]).sum()).collect())
            .collect()
    };
    let base = repre_drift(&to_tensor(&f), &to_tensor(&g), 2, true).unwrap();
    let rotated = repre_drift(&to_tensor(&rotate(&f)), &to_tensor(&rotate(&g)), 2, true).unwrap();
    assert!((base - rotated).abs() < 1e-10);
    let swapped = repre_drift(&to_tensor(&g), &to_tensor(&f), 2, true).unwrap();
    assert!((base - swapped).abs() < 1e-12);
}

#[test]
fn drift_exact_endpoints() {
    let mut r = rng(13);
    let f = to_tensor(&gaussian_rows(&mut r, 20, 5, &[1.0, 2.0, 3.0, 0.5, 0.1]));
    assert_eq!(repre_drift(&f, &f, 3, true).unwrap(), 0.0);
    let x = Tensor2D::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [2.0, 0.0]]).unwrap();
    let y = Tensor2D::from_rows(&[[0.0, 1.0], [0.0, -1.0], [0.0, 2.0]]).unwrap();
    assert_eq!(repre_drift(&x, &y, 1, true).unwrap(), 1.0);
}

#[test]
fn herding_matches_exhaustive_greedy() {
    let mut r = rng(14);
    for _ in 0..100 {
        let n = r.random_range(1..9);
        let m = r.random_range(1..=n.min(3));
        let d = r.random_range(1..4);
        let pts = gaussian_rows(&mut r, n, d, &[1.0]);
        assert_eq!(herding_order(&to_tensor(&pts), m).unwrap(), exhaustive_herding(&pts, m));
    }
}

#[test]
fn forward_matches_nested_loops() {
    let mut r = rng(0);
    let model = EncoderModel::mlp(3, &[4], 2, &mut r).unwrap();
    let x = gaussian_rows(&mut r, 5, 3, &[1.0]);
    let ours = model.forward(&to_tensor(&x)).unwrap();
    for (n, row) in x.iter().enumerate() {
        let mut h = row.clone();
        for layer in model.layers() {
            let w = &layer.weight;
            let mut next = layer.bias.clone();
            for (j, out) in next.iter_mut().enumerate() {
                for (i, hi) in h.iter().enumerate() {
                    *out += hi * w.get(i, j);
                }
            }
            if layer.activation == lingocl::numcore::Activation::Relu {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = next;
        }
        for (c, v) in h.iter().enumerate() {
            assert!((ours.get(n, c) - v).abs() < 1e-12);
        }
    }
}

#[test]
fn logits_match_loop_dot_products() {
    let mut r = rng(3);
    let w = gaussian_rows(&mut r, 3, 4, &[1.0]);
    let f = gaussian_rows(&mut r, 6, 4, &[1.0]);
    let inner = similarity_logits(&to_tensor(&w), &to_tensor(&f), Similarity::Inner, 2.0).unwrap();
    let cos = similarity_logits(&to_tensor(&w), &to_tensor(&f), Similarity::Cosine, 2.0).unwrap();
    for n in 0..6 {
        for c in 0..3 {
            let dot: f64 = (0..4).map(|k| w[c][k] * f[n][k]).sum();
            let nw: f64 = w[c].iter().map(|v| v * v).sum::<f64>().sqrt();
            let nf: f64 = f[n].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((inner.get(n, c) - 2.0 * dot).abs() < 1e-12);
            assert!((cos.get(n, c) - 2.0 * dot / (nw * nf)).abs() < 1e-12);
        }
    }
}

#[test]
fn projection_removes_conflict() {
    let mut r = rng(4);
    for _ in 0..50 {
        let g: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
        let g_ref: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
        let p = project_gradient(&g, &g_ref);
        let dot: f64 = p.iter().zip(&g_ref).map(|(a, b)| a * b).sum();
        assert!(dot >= -1e-12);
        let orig: f64 = g.iter().zip(&g_ref).map(|(a, b)| a * b).sum();
        if orig < 0.0 {
            assert!(dot.abs() <= 1e-12);
        } else {
            assert_eq!(p, g);
        }
    }
}
