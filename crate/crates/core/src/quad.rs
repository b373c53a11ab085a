//! Fixed Gauss-Legendre rules and geometrically graded composites for
//! integrands with algebraic endpoint singularities.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Legendre roots by Newton iteration from the Chebyshev guess.
    pub fn legendre(n: usize) -> Rule {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_eval(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_eval(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Rule { nodes, weights }
    }
}

fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Cached rule for the common orders; other orders are built on demand.
pub fn rule(n: usize) -> std::borrow::Cow<'static, Rule> {
    static R8: OnceLock<Rule> = OnceLock::new();
    static R16: OnceLock<Rule> = OnceLock::new();
    static R32: OnceLock<Rule> = OnceLock::new();
    match n {
        8 => std::borrow::Cow::Borrowed(R8.get_or_init(|| Rule::legendre(8))),
        16 => std::borrow::Cow::Borrowed(R16.get_or_init(|| Rule::legendre(16))),
        32 => std::borrow::Cow::Borrowed(R32.get_or_init(|| Rule::legendre(32))),
        _ => std::borrow::Cow::Owned(Rule::legendre(n)),
    }
}

/// n-point Gauss-Legendre on [a, b].
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let r = rule(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    r.nodes
        .iter()
        .zip(&r.weights)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Which endpoints of the interval carry a (near-)singularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cluster {
    Left,
    Right,
    Both,
}

/// Composite 16-point rule on geometrically shrinking pieces toward the
/// clustered endpoint(s). The innermost piece, of relative width
/// `2^-depth`, is mapped by `v -> v^40` so integrable algebraic
/// singularities are resolved there too.
///
/// Nodes next to a right endpoint are limited by the spacing of floats
/// around `b`; put strong singularities at the origin when possible.
pub fn graded<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cluster: Cluster, depth: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    match cluster {
        Cluster::Left => graded_toward(&f, a, b - a, depth),
        Cluster::Right => graded_toward(&f, b, a - b, depth),
        Cluster::Both => {
            let half = 0.5 * (b - a);
            graded_toward(&f, a, half, depth) + graded_toward(&f, b, -half, depth)
        }
    }
}

/// Integral over the segment from `end` to `end + span` (either sign),
/// clustered at `end`.
fn graded_toward<F: Fn(f64) -> f64 + ?Sized>(f: &F, end: f64, span: f64, depth: usize) -> f64 {
    let mut acc = 0.0;
    let mut hi = 1.0;
    for _ in 0..depth {
        let lo = 0.5 * hi;
        acc += gauss_legendre(f, end + span * lo, end + span * hi, 16);
        hi = lo;
    }
    let w = span * hi;
    let inner = gauss_legendre(
        |v| {
            let x = end + w * v.powi(40);
            // the node rounded onto the endpoint itself; its weight is negligible
            if x == end {
                0.0
            } else {
                40.0 * v.powi(39) * f(x)
            }
        },
        0.0,
        1.0,
        16,
    ) * w;
    // span < 0 means the pieces were traversed right to left
    (acc + inner) * span.signum()
}

/// Composite rule on `m` equal pieces.
pub fn composite<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, m: usize, n: usize) -> f64 {
    let h = (b - a) / m as f64;
    (0..m)
        .map(|i| gauss_legendre(&f, a + i as f64 * h, a + (i + 1) as f64 * h, n))
        .sum()
}
