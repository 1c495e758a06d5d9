//! Gauss–Legendre rules on the reference interval `[0, 1]`.

/// Tensor-product Gauss–Legendre rule with `order` points per direction.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn gauss_legendre(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let (nodes, weights) = gauss_legendre_01(order);
        Self {
            order,
            nodes,
            weights,
        }
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Tensor points and weights on the box `bounds[k] = (a_k, b_k)`, `k < dim`.
    /// Weights include the box volume. Points are lexicographic, first direction fastest.
    pub fn on_box(&self, dim: usize, bounds: &[(f64, f64); 3]) -> (Vec<[f64; 3]>, Vec<f64>) {
        let q = self.order;
        let total = q.pow(dim as u32);
        let mut pts = Vec::with_capacity(total);
        let mut wts = Vec::with_capacity(total);
        for lin in 0..total {
            let mut x = [0.0; 3];
            let mut w = 1.0;
            let mut rest = lin;
            for k in 0..dim {
                let i = rest % q;
                rest /= q;
                let (a, b) = bounds[k];
                x[k] = a + (b - a) * self.nodes[i];
                w *= (b - a) * self.weights[i];
            }
            pts.push(x);
            wts.push(w);
        }
        (pts, wts)
    }
}

fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, refined by Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
