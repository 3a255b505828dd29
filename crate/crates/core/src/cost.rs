//! Closed-form traffic models for row product and feature slicing, the
//! perfect-tiling search, and empirical miss-rate curves.
//!
//! All counts are in words. The miss-rate function takes the cache working
//! set in bytes.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::cache::UNIT_STRIPS;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissRateFn<T> {
    Constant(T),
    /// Sample points sorted by working-set size with non-decreasing rates.
    PiecewiseLinear(Vec<(T, T)>),
}

fn clamp01<T: Float>(x: T) -> T {
    x.max(T::zero()).min(T::one())
}

impl<T: Float> MissRateFn<T> {
    pub fn eval(&self, working_set_bytes: T) -> T {
        match self {
            MissRateFn::Constant(c) => clamp01(*c),
            MissRateFn::PiecewiseLinear(pts) => {
                let (first, last) = (pts[0], pts[pts.len() - 1]);
                if working_set_bytes <= first.0 {
                    return clamp01(first.1);
                }
                if working_set_bytes >= last.0 {
                    return clamp01(last.1);
                }
                let i = pts.partition_point(|p| p.0 <= working_set_bytes);
                let (x0, y0) = pts[i - 1];
                let (x1, y1) = pts[i];
                clamp01(y0 + (y1 - y0) * (working_set_bytes - x0) / (x1 - x0))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport<T> {
    pub topology_words: T,
    pub cached_feature_words: T,
    pub output_words: T,
    pub total_words: T,
}

impl<T: Float> CostReport<T> {
    fn new(topology_words: T, cached_feature_words: T, output_words: T) -> Self {
        CostReport {
            topology_words,
            cached_feature_words,
            output_words,
            total_words: topology_words + cached_feature_words + output_words,
        }
    }
}

fn num<T: Float>(x: u64) -> T {
    T::from(x).expect("count representable")
}

/// Row product: one pass over the topology, features through the cache,
/// every output written once.
pub fn m_row<T: Float>(v: u64, e: u64, f: u64, m: &MissRateFn<T>) -> CostReport<T> {
    m_fs(v, e, f, 1, 1, m)
}

/// Feature slicing with `b_f` slices and a uniform `b_v x b_v` vertex tiling.
pub fn m_fs<T: Float>(v: u64, e: u64, f: u64, b_f: u64, b_v: u64, m: &MissRateFn<T>) -> CostReport<T> {
    let (vt, et, ft, bf, bv) = (num::<T>(v), num::<T>(e), num::<T>(f), num::<T>(b_f), num::<T>(b_v));
    let working_set = vt * ft * num::<T>(4) / (bf * bv);
    CostReport::new(
        bf * (bv * vt + et),
        m.eval(working_set) * et * ft,
        bv * vt * ft,
    )
}

/// Feature-only tiling moves fewer uncached words than vertex-only tiling
/// of the same working set exactly when the feature width exceeds the
/// average degree.
pub fn crossover_favors_feature_slicing(v: u64, e: u64, f: u64) -> bool {
    assert!(v > 0, "empty graph has no average degree");
    (f as u128) * (v as u128) > e as u128
}

/// Vertex-only (`1, k`) and feature-only (`k, 1`) costs for the same factor `k`.
pub fn extreme_tilings<T: Float>(v: u64, e: u64, f: u64, k: u64, m: &MissRateFn<T>) -> (CostReport<T>, CostReport<T>) {
    (m_fs(v, e, f, 1, k, m), m_fs(v, e, f, k, 1, m))
}

/// Smallest `b_f * b_v` whose tile of features fits in the cache.
///
/// Among minimal products the largest `b_f` wins, which also picks the
/// smallest `b_v`. `b_v` is a power of two up to 64 strips. In strict mode a
/// slice may not be narrower than 64 bytes.
pub fn perfect_tiling(
    v: u64,
    f: u64,
    elem_bytes: u64,
    cache_bytes: u64,
    strict_slice_width: bool,
) -> Result<(u64, u64)> {
    if cache_bytes == 0 {
        return Err(Error::InvalidParameter("cache_bytes must be positive".into()));
    }
    if v == 0 || f == 0 || elem_bytes == 0 {
        return Err(Error::InvalidParameter("dimensions must be positive".into()));
    }
    let max_bf = if strict_slice_width {
        (f * elem_bytes / 64).max(1)
    } else {
        f
    };
    let fits = |bf: u64, bv: u64| v.div_ceil(bv) * f.div_ceil(bf) * elem_bytes <= cache_bytes;
    let mut best: Option<(u64, u64)> = None;
    let mut bv = 1u64;
    while bv <= UNIT_STRIPS as u64 {
        // smallest b_f that fits for this b_v
        if let Some(bf) = (1..=max_bf).find(|&bf| fits(bf, bv)) {
            let better = match best {
                None => true,
                Some((b0, v0)) => bf * bv < b0 * v0 || (bf * bv == b0 * v0 && bf > b0),
            };
            if better {
                best = Some((bf, bv));
            }
        }
        bv *= 2;
    }
    best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no tiling of {v} x {f} elements fits a {cache_bytes} B cache"
        ))
    })
}

/// Monotone piecewise-linear fit through measured (working set, miss rate)
/// samples. Rates are made non-decreasing by pooling adjacent violators and
/// clamped to [0, 1].
pub fn fit_miss_fn<T: Float>(samples: &[(T, T)]) -> Result<MissRateFn<T>> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("need at least one miss-rate sample".into()));
    }
    if samples.iter().any(|(x, y)| x.is_nan() || y.is_nan()) {
        return Err(Error::InvalidParameter("miss-rate samples contain NaN".into()));
    }
    let mut pts: Vec<(T, T)> = samples.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("no NaN"));

    // collapse equal x into their mean, remembering weights
    let mut xs: Vec<(T, T, T)> = Vec::new(); // (x, sum y, count)
    for (x, y) in pts {
        match xs.last_mut() {
            Some(last) if last.0 == x => {
                last.1 = last.1 + y;
                last.2 = last.2 + T::one();
            }
            _ => xs.push((x, y, T::one())),
        }
    }
    if xs.len() == 1 {
        return Ok(MissRateFn::Constant(clamp01(xs[0].1 / xs[0].2)));
    }

    // pool adjacent violators: blocks of (mean, weight, span)
    let mut blocks: Vec<(T, T, usize)> = Vec::new();
    for &(_, sum, w) in &xs {
        blocks.push((sum / w, w, 1));
        while blocks.len() > 1 {
            let n = blocks.len();
            let (m1, w1, s1) = blocks[n - 1];
            let (m0, w0, s0) = blocks[n - 2];
            if m0 <= m1 {
                break;
            }
            blocks.truncate(n - 2);
            blocks.push(((m0 * w0 + m1 * w1) / (w0 + w1), w0 + w1, s0 + s1));
        }
    }
    let ys = blocks.iter().flat_map(|&(m, _, s)| std::iter::repeat_n(clamp01(m), s));
    Ok(MissRateFn::PiecewiseLinear(xs.iter().map(|p| p.0).zip(ys).collect()))
}
