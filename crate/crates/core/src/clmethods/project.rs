use crate::numcore::dot;

/// Single-constraint gradient projection against a replay gradient.
///
/// If `g` agrees with `g_ref` (non-negative inner product) it is returned
/// unchanged; otherwise its component along `g_ref` is removed. A zero
/// reference leaves `g` as is.
pub fn project_gradient(g: &[f64], g_ref: &[f64]) -> Vec<f64> {
    assert_eq!(g.len(), g_ref.len(), "gradient shapes differ");
    let inner = dot(g, g_ref);
    let ref_sq = dot(g_ref, g_ref);
    if inner >= 0.0 || ref_sq == 0.0 {
        return g.to_vec();
    }
    let coeff = inner / ref_sq;
    g.iter().zip(g_ref).map(|(a, b)| a - coeff * b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_unchanged_opposed_vanishes() {
        let g = [1.0, -2.0, 0.5];
        assert_eq!(project_gradient(&g, &g), g.to_vec());
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        assert!(project_gradient(&g, &neg).iter().all(|v| v.abs() < 1e-15));
        assert_eq!(project_gradient(&g, &[0.0; 3]), g.to_vec());
    }
}
