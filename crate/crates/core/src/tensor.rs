//! Dense square feature maps and flat vectors.
//!
//! Every map is stored channel-minor, row-major: element `[i][j][c]` of an
//! `N×N×C` map lives at offset `(i·N + j)·C + c`. Flattening is therefore a
//! plain move of the backing buffer and is bit-reproducible.

use crate::error::{Error, Result};

/// Flat offset of `[i][j][c]` in an `n×n×depth` map.
#[inline]
pub fn index_of(i: usize, j: usize, c: usize, n: usize, depth: usize) -> usize {
    debug_assert!(i < n && j < n && c < depth, "index ({i},{j},{c}) out of range for {n}x{n}x{depth}");
    (i * n + j) * depth + c
}

/// A square 3-D feature map `Z` of size `side × side × depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap3 {
    side: usize,
    depth: usize,
    data: Vec<f64>,
}

impl FeatureMap3 {
    pub fn new(side: usize, depth: usize, data: Vec<f64>) -> Result<Self> {
        if side == 0 || depth == 0 {
            return Err(Error::shape("positive side and depth", format!("{side}x{side}x{depth}")));
        }
        if data.len() != side * side * depth {
            return Err(Error::shape(side * side * depth, data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self { side, depth, data })
    }

    pub fn zeros(side: usize, depth: usize) -> Self {
        assert!(side > 0 && depth > 0, "feature map dimensions must be positive");
        Self {
            side,
            depth,
            data: vec![0.0; side * side * depth],
        }
    }

    /// Builds a map by evaluating `f(i, j, c)` at every position.
    pub fn from_fn(side: usize, depth: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut map = Self::zeros(side, depth);
        for i in 0..side {
            for j in 0..side {
                for c in 0..depth {
                    map.data[index_of(i, j, c, side, depth)] = f(i, j, c);
                }
            }
        }
        map
    }

    /// Layer-internal constructor; callers guarantee the length.
    pub(crate) fn from_raw(side: usize, depth: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), side * side * depth);
        Self { side, depth, data }
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.depth
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[index_of(i, j, c, self.side, self.depth)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, value: f64) {
        let idx = index_of(i, j, c, self.side, self.depth);
        self.data[idx] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Sum of all elements in channel `c`.
    pub fn channel_sum(&self, c: usize) -> f64 {
        self.data.iter().skip(c).step_by(self.depth).sum()
    }

    /// Adds `p` rows/columns of zeros on every edge.
    pub fn zero_pad(&self, p: usize) -> FeatureMap3 {
        if p == 0 {
            return self.clone();
        }
        let n = self.side + 2 * p;
        let d = self.depth;
        let mut out = vec![0.0; n * n * d];
        for i in 0..self.side {
            let src = index_of(i, 0, 0, self.side, d);
            let dst = index_of(i + p, p, 0, n, d);
            out[dst..dst + self.side * d].copy_from_slice(&self.data[src..src + self.side * d]);
        }
        FeatureMap3::from_raw(n, d, out)
    }

    /// Reshapes into a 1-D vector in canonical order.
    pub fn flatten(self) -> Vector1 {
        Vector1(self.data)
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn from_vector(v: Vector1, side: usize, depth: usize) -> Result<Self> {
        Self::new(side, depth, v.0)
    }
}

/// A 1-D vector of activations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector1(pub Vec<f64>);

impl Vector1 {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for Vector1 {
    fn from(v: Vec<f64>) -> Self {
        Vector1(v)
    }
}
