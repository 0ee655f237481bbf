//! Polynomial flow functions: least-squares fits of each output on all
//! monomials of the inputs up to a total degree, plus exact derivatives.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthesis::StateRecord;
use crate::traces::ChannelSchema;

/// Exponent vectors of every monomial in `vars` variables with total degree
/// at most `degree`: by degree, then lexicographically descending, so the
/// intercept comes first and `x0` precedes `x1`.
pub fn monomials(vars: usize, degree: u32) -> Vec<Vec<u32>> {
    fn fill(rest: u32, at: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if at + 1 == cur.len() {
            cur[at] = rest;
            out.push(cur.clone());
            return;
        }
        for e in (0..=rest).rev() {
            cur[at] = e;
            fill(rest - e, at + 1, cur, out);
        }
    }
    let mut out = Vec::new();
    if vars == 0 {
        out.push(Vec::new());
        return out;
    }
    for d in 0..=degree {
        let mut cur = vec![0; vars];
        fill(d, 0, &mut cur, &mut out);
    }
    out
}

/// `coef * factor * prod(x_i ^ e_i)`. The integer factor accumulates
/// differentiation so mixed partials compare exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub coef: f64,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub factor: u64,
}

fn one() -> u64 {
    1
}

fn is_one(f: &u64) -> bool {
    *f == 1
}

impl Term {
    pub fn value(&self) -> f64 {
        self.coef * self.factor as f64
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .fold(self.value(), |acc, (&e, &xi)| acc * xi.powi(e as i32))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: Vec<Term>,
}

impl Polynomial {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    /// Exact symbolic derivative; terms that vanish are dropped.
    pub fn derivative(&self, var: usize) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter(|t| t.exponents.get(var).copied().unwrap_or(0) > 0)
            .map(|t| {
                let mut exponents = t.exponents.clone();
                let e = exponents[var];
                exponents[var] -= 1;
                Term {
                    exponents,
                    coef: t.coef,
                    factor: t.factor * e as u64,
                }
            })
            .collect();
        Polynomial { terms }
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.exponents.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Human-readable form with two-decimal coefficients.
    pub fn render(&self, names: &[String]) -> String {
        let mut s = String::new();
        for (k, t) in self.terms.iter().enumerate() {
            let c = t.value();
            let mut mono: Vec<String> = Vec::new();
            for (name, &e) in names.iter().zip(&t.exponents) {
                match e {
                    0 => {}
                    1 => mono.push(name.clone()),
                    _ => mono.push(format!("{name}^{e}")),
                }
            }
            let mag = format!("{:.2}", c.abs());
            let body = if mono.is_empty() {
                mag
            } else {
                format!("{mag}*{}", mono.join("*"))
            };
            if k == 0 {
                if c < 0.0 {
                    s.push('-');
                }
                s.push_str(&body);
            } else {
                s.push_str(if c < 0.0 { " - " } else { " + " });
                s.push_str(&body);
            }
        }
        if s.is_empty() {
            s.push_str("0.00");
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowOutput {
    pub name: String,
    pub poly: Polynomial,
    /// Training residual in normalized units.
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialFlow {
    pub degree: u32,
    pub inputs: Vec<String>,
    pub outputs: Vec<FlowOutput>,
}

impl fmt::Display for PolynomialFlow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, o) in self.outputs.iter().enumerate() {
            if k > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{} = {}", o.name, o.poly.render(&self.inputs))?;
        }
        Ok(())
    }
}

impl PolynomialFlow {
    /// Flow that predicts a fixed value for every output.
    pub fn constant(inputs: Vec<String>, outputs: &[(String, f64)]) -> Self {
        let zero = vec![0; inputs.len()];
        PolynomialFlow {
            degree: 0,
            outputs: outputs
                .iter()
                .map(|(name, v)| FlowOutput {
                    name: name.clone(),
                    poly: Polynomial {
                        terms: vec![Term {
                            exponents: zero.clone(),
                            coef: *v,
                            factor: 1,
                        }],
                    },
                    rmse: 0.0,
                })
                .collect(),
            inputs,
        }
    }
}

/// Least squares with optional ridge penalty `lambda` on every coefficient
/// except the intercept. `x` holds one row of inputs per sample, `y` one row
/// of outputs.
pub fn fit_samples(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    inputs: Vec<String>,
    outputs: Vec<String>,
    degree: u32,
    lambda: f64,
) -> Result<PolynomialFlow> {
    let n = x.len();
    let vars = inputs.len();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if let Some(bad) = x.iter().find(|r| r.len() != vars) {
        return Err(Error::DimensionMismatch {
            expected: vars,
            got: bad.len(),
        });
    }
    if let Some(bad) = y.iter().find(|r| r.len() != outputs.len()) {
        return Err(Error::DimensionMismatch {
            expected: outputs.len(),
            got: bad.len(),
        });
    }
    let monos = monomials(vars, degree);
    let m = monos.len();
    if n < m {
        return Err(Error::Underdetermined {
            samples: n,
            monomials: m,
        });
    }

    let penalized = if lambda > 0.0 { m - 1 } else { 0 };
    let rows = n + penalized;
    let root = lambda.sqrt();
    let a = DMatrix::from_fn(rows, m, |i, j| {
        if i < n {
            monos[j]
                .iter()
                .zip(&x[i])
                .fold(1.0, |acc, (&e, &v)| acc * v.powi(e as i32))
        } else if j == i - n + 1 {
            root
        } else {
            0.0
        }
    });
    let b = DMatrix::from_fn(rows, outputs.len(), |i, k| if i < n { y[i][k] } else { 0.0 });

    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * rows.max(m) as f64 * f64::EPSILON;
    let rank = svd.rank(tol);
    if rank < m {
        return Err(Error::DegenerateDesign { rank, cols: m });
    }
    let coef = svd.solve(&b, tol).map_err(|e| Error::DegenerateDesign {
        rank: if e.is_empty() { 0 } else { rank },
        cols: m,
    })?;

    let mut flows = Vec::with_capacity(outputs.len());
    for (k, name) in outputs.into_iter().enumerate() {
        let poly = Polynomial {
            terms: monos
                .iter()
                .enumerate()
                .map(|(j, e)| Term {
                    exponents: e.clone(),
                    coef: coef[(j, k)],
                    factor: 1,
                })
                .collect(),
        };
        let sse: f64 = x.iter().zip(y).map(|(xi, yi)| (poly.eval(xi) - yi[k]).powi(2)).sum();
        flows.push(FlowOutput {
            name,
            poly,
            rmse: (sse / n as f64).sqrt(),
        });
    }
    Ok(PolynomialFlow {
        degree,
        inputs,
        outputs: flows,
    })
}

/// Regression samples of a state: the mode-local clock (when time is an
/// input) and the input channels against the output channels.
pub fn state_samples(state: &StateRecord, schema: &ChannelSchema) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let ins = schema.input_indices();
    let outs = schema.output_indices();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for seg in &state.segments {
        for (k, row) in seg.rows.iter().enumerate() {
            let mut xi = Vec::with_capacity(ins.len() + 1);
            if schema.time_is_input {
                xi.push(k as f64 * seg.clock_step);
            }
            xi.extend(ins.iter().map(|&i| row[i]));
            x.push(xi);
            y.push(outs.iter().map(|&i| row[i]).collect());
        }
    }
    (x, y)
}

pub fn fit_flow(state: &StateRecord, schema: &ChannelSchema, degree: u32, ridge: f64) -> Result<PolynomialFlow> {
    let (x, y) = state_samples(state, schema);
    fit_samples(&x, &y, schema.input_names(), schema.output_names(), degree, ridge)
}

/// `result[i][k]` is the derivative of output `k` with respect to input `i`.
pub fn partial_derivatives(flow: &PolynomialFlow) -> Vec<Vec<Polynomial>> {
    (0..flow.inputs.len())
        .map(|i| flow.outputs.iter().map(|o| o.poly.derivative(i)).collect())
        .collect()
}

pub fn evaluate_flow(flow: &PolynomialFlow, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != flow.inputs.len() {
        return Err(Error::DimensionMismatch {
            expected: flow.inputs.len(),
            got: x.len(),
        });
    }
    Ok(flow.outputs.iter().map(|o| o.poly.eval(x)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn monomial_order() {
        let m = monomials(3, 2);
        assert_eq!(m.len(), 10);
        assert_eq!(m[0], vec![0, 0, 0]);
        assert_eq!(&m[1..4], &[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert_eq!(m[4], vec![2, 0, 0]);
        assert_eq!(m[5], vec![1, 1, 0]);
        assert_eq!(m[9], vec![0, 0, 2]);
        assert_eq!(monomials(2, 3).len(), 10);
    }

    /// The three-input quadratic used throughout: after the fit the
    /// derivative with respect to x1 is -0.32*x0 - 10.91*x2.
    fn reference() -> Vec<f64> {
        vec![0.01, -0.32, 0.0, -10.91, -0.84, -0.32, 4.3, 0.0, -10.91, 19.02]
    }

    fn sample_grid() -> Vec<Vec<f64>> {
        let mut x = Vec::new();
        for a in 0..5 {
            for b in 0..5 {
                for c in 0..5 {
                    x.push(vec![a as f64 / 4.0, b as f64 / 4.0, (c as f64 / 4.0).powi(2)]);
                }
            }
        }
        x
    }

    #[test]
    fn recovers_reference_polynomial() {
        let coef = reference();
        let monos = monomials(3, 2);
        let x = sample_grid();
        let y: Vec<Vec<f64>> = x
            .iter()
            .map(|xi| {
                vec![monos
                    .iter()
                    .zip(&coef)
                    .map(|(e, c)| c * e.iter().zip(xi).map(|(&k, v)| v.powi(k as i32)).product::<f64>())
                    .sum()]
            })
            .collect();
        let flow = fit_samples(&x, &y, names(3), vec!["y".into()], 2, 0.0).unwrap();
        for (t, c) in flow.outputs[0].poly.terms.iter().zip(&coef) {
            assert!((t.coef - c).abs() < 1e-9, "{} vs {c}", t.coef);
        }
        assert!(flow.outputs[0].rmse < 1e-10);

        let d = partial_derivatives(&flow);
        let p = [0.3, 0.7, 0.2];
        let dx0 = -0.32 - 1.68 * p[0] - 0.32 * p[1] + 4.3 * p[2];
        let dx1 = -0.32 * p[0] - 10.91 * p[2];
        let dx2 = -10.91 + 4.3 * p[0] - 10.91 * p[1] + 38.04 * p[2];
        assert!((d[0][0].eval(&p) - dx0).abs() < 1e-8);
        assert!((d[1][0].eval(&p) - dx1).abs() < 1e-8);
        assert!((d[2][0].eval(&p) - dx2).abs() < 1e-8);
    }

    #[test]
    fn mixed_partials_equal() {
        let poly = Polynomial {
            terms: monomials(2, 3)
                .into_iter()
                .enumerate()
                .map(|(i, e)| Term {
                    exponents: e,
                    coef: 0.1 * i as f64 + 0.37,
                    factor: 1,
                })
                .collect(),
        };
        assert_eq!(poly.derivative(0).derivative(1), poly.derivative(1).derivative(0));
    }

    #[test]
    fn errors() {
        let x = vec![vec![0.0, 1.0]; 3];
        let y = vec![vec![1.0]; 3];
        assert!(matches!(
            fit_samples(&x, &y, names(2), vec!["y".into()], 2, 0.0),
            Err(Error::Underdetermined {
                samples: 3,
                monomials: 6
            })
        ));
        let x: Vec<Vec<f64>> = (0..10).map(|_| vec![0.5, 0.5]).collect();
        let y = vec![vec![1.0]; 10];
        assert!(matches!(
            fit_samples(&x, &y, names(2), vec!["y".into()], 1, 0.0),
            Err(Error::DegenerateDesign { .. })
        ));
        // Ridge makes the same design solvable.
        assert!(fit_samples(&x, &y, names(2), vec!["y".into()], 1, 1e-6).is_ok());
        let flow = PolynomialFlow::constant(names(2), &[("y".into(), 2.0)]);
        assert!(matches!(
            evaluate_flow(&flow, &[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert_eq!(evaluate_flow(&flow, &[1.0, 3.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn render_readable() {
        let p = Polynomial {
            terms: vec![
                Term {
                    exponents: vec![0, 0],
                    coef: -0.5,
                    factor: 1,
                },
                Term {
                    exponents: vec![2, 1],
                    coef: 1.25,
                    factor: 2,
                },
            ],
        };
        assert_eq!(p.render(&names(2)), "-0.50 + 2.50*x0^2*x1");
    }
}
