//! Finite differences for the joint hitting probability `f(x, y)` of two
//! Wright-Fisher components:
//!
//! `x(1-x)/2 f_xx + y(1-y)/2 f_yy - x y f_xy = 0` on `(0, b)^2`,
//! `f(x, 0) = f(0, y) = 0`, `f(x, b) = x / b`, `f(b, y) = y / b`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *out = s;
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        (self.row_ptr[r]..self.row_ptr[r + 1])
            .find(|&k| self.cols[k] == c)
            .map_or(0.0, |k| self.vals[k])
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }
}

/// One equation per interior node; unknown `(i, j)` (`x = i h`, `y = j h`,
/// `1 <= i, j <= m`) has index `(i - 1) m + (j - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeSystem {
    pub b: f64,
    pub m: usize,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

impl PdeSystem {
    pub fn spacing(&self) -> f64 {
        self.b / (self.m + 1) as f64
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        (i - 1) * self.m + (j - 1)
    }
}

fn boundary(b: f64, x: f64, y: f64, i: usize, j: usize, last: usize) -> Option<f64> {
    if i == 0 || j == 0 {
        Some(0.0)
    } else if i == last {
        Some(y / b)
    } else if j == last {
        Some(x / b)
    } else {
        None
    }
}

/// Weights of the `x` and `y` neighbours and of the `(+1, +1)` diagonal
/// neighbour at node `(x, y)` for spacing `h`.
pub fn stencil_coefficients(x: f64, y: f64, h: f64) -> (f64, f64, f64) {
    let h2 = h * h;
    (0.5 * x * (1.0 - x) / h2, 0.5 * y * (1.0 - y) / h2, -x * y / (4.0 * h2))
}

pub fn pde_assemble(b: f64, m: usize) -> Result<PdeSystem> {
    if m < 3 {
        return Err(Error::Precondition(format!("need m >= 3 interior nodes, got {m}")));
    }
    if !(b > 0.0 && b <= 0.5) {
        return Err(Error::Domain(format!(
            "b must lie in (0, 0.5] so that the square stays in the simplex, got {b}"
        )));
    }
    let h = b / (m + 1) as f64;
    let last = m + 1;
    let n = m * m;
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(9 * n);
    let mut vals = Vec::with_capacity(9 * n);
    let mut rhs = vec![0.0; n];
    row_ptr.push(0);
    for i in 1..=m {
        let x = i as f64 * h;
        for j in 1..=m {
            let y = j as f64 * h;
            let (cx, cy, cxy) = stencil_coefficients(x, y, h);
            let r = (i - 1) * m + (j - 1);
            // (di, dj, coefficient) in increasing column order
            let stencil = [
                (-1i64, -1i64, cxy),
                (-1, 0, cx),
                (-1, 1, -cxy),
                (0, -1, cy),
                (0, 0, -2.0 * (cx + cy)),
                (0, 1, cy),
                (1, -1, -cxy),
                (1, 0, cx),
                (1, 1, cxy),
            ];
            for (di, dj, c) in stencil {
                if c == 0.0 {
                    continue;
                }
                let (ni, nj) = ((i as i64 + di) as usize, (j as i64 + dj) as usize);
                let (nx, ny) = (ni as f64 * h, nj as f64 * h);
                match boundary(b, nx, ny, ni, nj, last) {
                    Some(g) => rhs[r] -= c * g,
                    None => {
                        cols.push((ni - 1) * m + (nj - 1));
                        vals.push(c);
                    }
                }
            }
            row_ptr.push(cols.len());
        }
    }
    Ok(PdeSystem {
        b,
        m,
        matrix: CsrMatrix { n, row_ptr, cols, vals },
        rhs,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned BiCGSTAB. Returns the solution, the iteration
/// count and the final relative residual `|b - Ax| / |b|`.
pub fn bicgstab(a: &CsrMatrix, rhs: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize, f64)> {
    let n = a.n;
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let bnorm = norm(rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0, 0.0));
    }
    let mut r = rhs.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut rel = 1.0;
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::Solver {
                iterations: it,
                residual: rel,
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
            y[k] = inv_diag[k] * p[k];
        }
        a.mul_into(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
        }
        if norm(&s) / bnorm <= tol {
            for k in 0..n {
                x[k] += alpha * y[k];
            }
            let rel = true_residual(a, rhs, &x, bnorm);
            return Ok((x, it, rel));
        }
        for k in 0..n {
            z[k] = inv_diag[k] * s[k];
        }
        a.mul_into(&z, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for k in 0..n {
            x[k] += alpha * y[k] + omega * z[k];
            r[k] = s[k] - omega * t[k];
        }
        rel = norm(&r) / bnorm;
        if rel <= tol {
            // guard against drift of the recursive residual
            let true_rel = true_residual(a, rhs, &x, bnorm);
            if true_rel <= tol {
                return Ok((x, it, true_rel));
            }
            r = residual(a, rhs, &x);
            rel = true_rel;
        }
    }
    Err(Error::Solver {
        iterations: max_iter,
        residual: rel,
    })
}

fn residual(a: &CsrMatrix, rhs: &[f64], x: &[f64]) -> Vec<f64> {
    let mut ax = vec![0.0; a.n];
    a.mul_into(x, &mut ax);
    rhs.iter().zip(&ax).map(|(b, y)| b - y).collect()
}

fn true_residual(a: &CsrMatrix, rhs: &[f64], x: &[f64], bnorm: f64) -> f64 {
    norm(&residual(a, rhs, x)) / bnorm
}

/// Solution on the full `(m + 2) x (m + 2)` node grid, boundary included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeGrid {
    pub b: f64,
    pub m: usize,
    /// Row-major by `x` index: `values[i * (m + 2) + j] = f(i h, j h)`.
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

pub fn pde_solve(system: &PdeSystem, tol: f64) -> Result<PdeGrid> {
    pde_solve_capped(system, tol, DEFAULT_MAX_ITER)
}

pub fn pde_solve_capped(system: &PdeSystem, tol: f64, max_iter: usize) -> Result<PdeGrid> {
    let (sol, iterations, residual) = bicgstab(&system.matrix, &system.rhs, tol, max_iter)?;
    let (b, m) = (system.b, system.m);
    let h = system.spacing();
    let side = m + 2;
    let mut values = vec![0.0; side * side];
    for i in 0..side {
        for j in 0..side {
            values[i * side + j] = match boundary(b, i as f64 * h, j as f64 * h, i, j, m + 1) {
                Some(g) => g,
                None => sol[system.index(i, j)],
            };
        }
    }
    Ok(PdeGrid {
        b,
        m,
        values,
        iterations,
        residual,
    })
}

impl PdeGrid {
    /// Grid holding `f(x, y)` sampled at the nodes (boundary data is not
    /// imposed).
    pub fn from_fn(b: f64, m: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let side = m + 2;
        let h = b / (m + 1) as f64;
        let mut values = Vec::with_capacity(side * side);
        for i in 0..side {
            for j in 0..side {
                values.push(f(i as f64 * h, j as f64 * h));
            }
        }
        Self {
            b,
            m,
            values,
            iterations: 0,
            residual: 0.0,
        }
    }

    pub fn side(&self) -> usize {
        self.m + 2
    }

    pub fn spacing(&self) -> f64 {
        self.b / (self.m + 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.side() + j]
    }

    /// Bilinear interpolation at `(x, y)` in `[0, b]^2`.
    pub fn value_at(&self, x: f64, y: f64) -> Result<f64> {
        if !((0.0..=self.b).contains(&x) && (0.0..=self.b).contains(&y)) {
            return Err(Error::Domain(format!("({x}, {y}) outside [0, {}]^2", self.b)));
        }
        let h = self.spacing();
        let last = self.side() - 1;
        let (u, v) = (x / h, y / h);
        let i = (u.floor() as usize).min(last - 1);
        let j = (v.floor() as usize).min(last - 1);
        let (s, t) = (u - i as f64, v - j as f64);
        Ok((1.0 - s) * (1.0 - t) * self.node(i, j)
            + s * (1.0 - t) * self.node(i + 1, j)
            + (1.0 - s) * t * self.node(i, j + 1)
            + s * t * self.node(i + 1, j + 1))
    }

    /// `max |f(x, y) - f(y, x)|` over the nodes.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.side();
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                d = d.max((self.node(i, j) - self.node(j, i)).abs());
            }
        }
        d
    }

    /// Largest mismatch between this grid's boundary nodes and the
    /// prescribed data.
    pub fn boundary_defect(&self) -> f64 {
        let n = self.side();
        let h = self.spacing();
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if let Some(g) = boundary(self.b, i as f64 * h, j as f64 * h, i, j, n - 1) {
                    d = d.max((self.node(i, j) - g).abs());
                }
            }
        }
        d
    }

    /// Smallest increment along either axis (negative when `f` decreases).
    pub fn min_increment(&self) -> f64 {
        let n = self.side();
        let mut d = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                if i + 1 < n {
                    d = d.min(self.node(i + 1, j) - self.node(i, j));
                }
                if j + 1 < n {
                    d = d.min(self.node(i, j + 1) - self.node(i, j));
                }
            }
        }
        d
    }

    /// `max |f_coarse - f_fine|` over the coarse nodes, for `fine.m + 1 =
    /// 2 (coarse.m + 1)`.
    pub fn nested_difference(&self, fine: &PdeGrid) -> Result<f64> {
        if fine.m + 1 != 2 * (self.m + 1) || fine.b != self.b {
            return Err(Error::Precondition(format!(
                "grids m={} and m={} are not nested",
                self.m, fine.m
            )));
        }
        let n = self.side();
        let mut d: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                d = d.max((self.node(i, j) - fine.node(2 * i, 2 * j)).abs());
            }
        }
        Ok(d)
    }

    /// `x,y,f` rows for every node.
    pub fn to_csv(&self) -> String {
        let h = self.spacing();
        let n = self.side();
        let mut out = String::with_capacity(n * n * 32);
        out.push_str("x,y,f\n");
        for i in 0..n {
            for j in 0..n {
                let _ = writeln!(out, "{},{},{}", i as f64 * h, j as f64 * h, self.node(i, j));
            }
        }
        out
    }
}

/// `r(x) = f(x, x) b^2 / x^2` at each abscissa; identically 1 for the
/// product reference `f = x y / b^2`.
pub fn corner_ratio(grid: &PdeGrid, points: &[f64]) -> Result<Vec<f64>> {
    let h = grid.spacing();
    points
        .iter()
        .map(|&x| {
            if x < h || x >= grid.b {
                return Err(Error::Domain(format!(
                    "abscissa {x} is not resolved by the grid (spacing {h}, b {})",
                    grid.b
                )));
            }
            Ok(grid.value_at(x, x)? * grid.b * grid.b / (x * x))
        })
        .collect()
}

/// Default diagonal abscissae `b/64, b/32, b/16, b/8`.
pub fn corner_points(b: f64) -> Vec<f64> {
    [64.0, 32.0, 16.0, 8.0].iter().map(|d| b / d).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerReport {
    pub points: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `2 r(x0) - r(2 x0)` with `x0` the smallest abscissa.
    pub extrapolated: f64,
    /// Change of the extrapolate between grids `m` and `2m + 1`.
    pub grid_error: f64,
}

/// Corner ratios on `fine`, linearly extrapolated toward 0, with the change
/// against `coarse` as the refinement error. The first two points must be
/// `x0` and `2 x0`.
pub fn corner_report(coarse: &PdeGrid, fine: &PdeGrid, points: &[f64]) -> Result<CornerReport> {
    if points.len() < 2 || (points[1] - 2.0 * points[0]).abs() > 1e-12 {
        return Err(Error::Precondition("corner report needs points x0, 2 x0, ...".into()));
    }
    let extrap = |r: &[f64]| 2.0 * r[0] - r[1];
    let rf = corner_ratio(fine, points)?;
    let rc = corner_ratio(coarse, points)?;
    Ok(CornerReport {
        points: points.to_vec(),
        extrapolated: extrap(&rf),
        grid_error: (extrap(&rf) - extrap(&rc)).abs(),
        ratios: rf,
    })
}
