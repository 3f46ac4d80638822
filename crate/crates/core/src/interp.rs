//! Cubic-convolution (Catmull-Rom) interpolation on uniform grids, in one
//! and two dimensions. Used for drift tables and the Monte-Carlo function
//! tables, where C^1 smoothness is enough.

use serde::{Deserialize, Serialize};

fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, t: f64) -> f64 {
    let a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
    let b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
    let c = -0.5 * p0 + 0.5 * p2;
    ((a * t + b) * t + c) * t + p1
}

/// How to fetch neighbours past the grid edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Edge {
    /// Clamp to the boundary value.
    Clamp,
    /// Wrap around; the grid covers exactly one period (last point is the
    /// period end, value-identical to the first).
    Periodic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
    pub edge: Edge,
}

impl UniformGrid {
    pub fn new(start: f64, end: f64, len: usize, edge: Edge) -> Self {
        assert!(len >= 2 && end > start);
        UniformGrid {
            start,
            step: (end - start) / (len - 1) as f64,
            len,
            edge,
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * (self.len - 1) as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.start + self.step * i as f64)
    }

    fn index(&self, i: isize) -> usize {
        match self.edge {
            Edge::Clamp => i.clamp(0, self.len as isize - 1) as usize,
            Edge::Periodic => {
                let n = self.len as isize - 1; // period in index units
                (((i % n) + n) % n) as usize
            }
        }
    }

    /// Cell index and local coordinate for `x`.
    fn locate(&self, x: f64) -> (isize, f64) {
        let u = (x - self.start) / self.step;
        match self.edge {
            Edge::Clamp => {
                let u = u.clamp(0.0, (self.len - 1) as f64);
                let mut i = u.floor() as isize;
                if i >= self.len as isize - 1 {
                    i = self.len as isize - 2;
                }
                (i, u - i as f64)
            }
            Edge::Periodic => {
                let n = (self.len - 1) as f64;
                let u = u.rem_euclid(n);
                let mut i = u.floor() as isize;
                if i as f64 >= n {
                    i = 0;
                }
                (i, u - i as f64)
            }
        }
    }
}

/// 2-D table of values on a pair of uniform grids, row-major in the first
/// axis: `values[ix * ygrid.len + iy]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table2 {
    pub xgrid: UniformGrid,
    pub ygrid: UniformGrid,
    pub values: Vec<f64>,
}

impl Table2 {
    pub fn new(xgrid: UniformGrid, ygrid: UniformGrid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), xgrid.len * ygrid.len);
        Table2 {
            xgrid,
            ygrid,
            values,
        }
    }

    pub fn build(xgrid: UniformGrid, ygrid: UniformGrid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let xs: Vec<f64> = xgrid.points().collect();
        let ys: Vec<f64> = ygrid.points().collect();
        let mut values = Vec::with_capacity(xs.len() * ys.len());
        for &x in &xs {
            for &y in &ys {
                values.push(f(x, y));
            }
        }
        Table2::new(xgrid, ygrid, values)
    }

    fn at(&self, ix: isize, iy: isize) -> f64 {
        let i = self.xgrid.index(ix);
        let j = self.ygrid.index(iy);
        self.values[i * self.ygrid.len + j]
    }

    /// Bicubic interpolation at `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let (ix, tx) = self.xgrid.locate(x);
        let (iy, ty) = self.ygrid.locate(y);
        let mut rows = [0.0; 4];
        for (r, row) in rows.iter_mut().enumerate() {
            let i = ix + r as isize - 1;
            *row = catmull_rom(
                self.at(i, iy - 1),
                self.at(i, iy),
                self.at(i, iy + 1),
                self.at(i, iy + 2),
                ty,
            );
        }
        catmull_rom(rows[0], rows[1], rows[2], rows[3], tx)
    }
}
