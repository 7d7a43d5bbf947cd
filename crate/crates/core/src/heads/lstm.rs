//! Single-layer LSTM over segment embeddings followed by a two-layer classifier.
//!
//! `x_1..x_T -> LSTM(D -> H) -> h_T -> Linear(H -> H) -> ReLU -> Linear(H -> 1) -> logit`
//!
//! Gate layout in the stacked weight matrices is input, forget, cell, output.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentHead {
    /// `(4H, D)`
    pub w_ih: Array2<f32>,
    /// `(4H, H)`
    pub w_hh: Array2<f32>,
    /// `(4H)`
    pub bias: Array1<f32>,
    /// `(H, H)`
    pub fc1_w: Array2<f32>,
    pub fc1_b: Array1<f32>,
    /// `(H)`
    pub fc2_w: Array1<f32>,
    pub fc2_b: f32,
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

fn uniform<R: Rng>(rng: &mut R, shape: (usize, usize), bound: f32) -> Array2<f32> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(-bound..bound))
}

fn uniform1<R: Rng>(rng: &mut R, len: usize, bound: f32) -> Array1<f32> {
    Array1::from_shape_simple_fn(len, || rng.random_range(-bound..bound))
}

struct StepCache {
    /// Post-activation gates, each `(T, H)`.
    i: Array2<f32>,
    f: Array2<f32>,
    g: Array2<f32>,
    o: Array2<f32>,
    c: Array2<f32>,
    h: Array2<f32>,
    z1: Array1<f32>,
    a1: Array1<f32>,
}

impl RecurrentHead {
    /// Uniform fan-in initialization: every tensor drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// with the hidden size as fan-in for the recurrent weights.
    pub fn init<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden as f32).sqrt();
        RecurrentHead {
            w_ih: uniform(rng, (4 * hidden, input_dim), k),
            w_hh: uniform(rng, (4 * hidden, hidden), k),
            bias: uniform1(rng, 4 * hidden, k),
            fc1_w: uniform(rng, (hidden, hidden), k),
            fc1_b: uniform1(rng, hidden, k),
            fc2_w: uniform1(rng, hidden, k),
            fc2_b: rng.random_range(-k..k),
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        RecurrentHead {
            w_ih: Array2::zeros((4 * hidden, input_dim)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
            fc1_w: Array2::zeros((hidden, hidden)),
            fc1_b: Array1::zeros(hidden),
            fc2_w: Array1::zeros(hidden),
            fc2_b: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hh.ncols()
    }

    fn check(&self, x: &ArrayView2<f32>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        if x.nrows() == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(())
    }

    /// Final hidden state after consuming the rows of `x` in order.
    pub fn final_hidden(&self, x: ArrayView2<f32>) -> Result<Array1<f32>> {
        self.check(&x)?;
        Ok(self.run(x).h.row(x.nrows() - 1).to_owned())
    }

    /// Classifier applied to a hidden state.
    pub fn classify(&self, h: ArrayView1<f32>) -> f32 {
        let a1 = (self.fc1_w.dot(&h) + &self.fc1_b).mapv(|v| v.max(0.0));
        self.fc2_w.dot(&a1) + self.fc2_b
    }

    pub fn logit(&self, x: ArrayView2<f32>) -> Result<f32> {
        self.check(&x)?;
        let cache = self.run(x);
        Ok(self.fc2_w.dot(&cache.a1) + self.fc2_b)
    }

    pub fn probability(&self, x: ArrayView2<f32>) -> Result<f32> {
        self.logit(x).map(sigmoid)
    }

    fn run(&self, x: ArrayView2<f32>) -> StepCache {
        let t_len = x.nrows();
        let hdim = self.hidden_size();
        let pre_in = x.dot(&self.w_ih.t()) + &self.bias;
        let mut cache = StepCache {
            i: Array2::zeros((t_len, hdim)),
            f: Array2::zeros((t_len, hdim)),
            g: Array2::zeros((t_len, hdim)),
            o: Array2::zeros((t_len, hdim)),
            c: Array2::zeros((t_len, hdim)),
            h: Array2::zeros((t_len, hdim)),
            z1: Array1::zeros(0),
            a1: Array1::zeros(0),
        };
        let mut h_prev = Array1::<f32>::zeros(hdim);
        let mut c_prev = Array1::<f32>::zeros(hdim);
        for t in 0..t_len {
            let gates = &pre_in.row(t) + &self.w_hh.dot(&h_prev);
            let i = gates.slice(s![0..hdim]).mapv(sigmoid);
            let f = gates.slice(s![hdim..2 * hdim]).mapv(sigmoid);
            let g = gates.slice(s![2 * hdim..3 * hdim]).mapv(f32::tanh);
            let o = gates.slice(s![3 * hdim..]).mapv(sigmoid);
            let c = &f * &c_prev + &i * &g;
            let h = &o * &c.mapv(f32::tanh);
            cache.i.row_mut(t).assign(&i);
            cache.f.row_mut(t).assign(&f);
            cache.g.row_mut(t).assign(&g);
            cache.o.row_mut(t).assign(&o);
            cache.c.row_mut(t).assign(&c);
            cache.h.row_mut(t).assign(&h);
            h_prev = h;
            c_prev = c;
        }
        cache.z1 = self.fc1_w.dot(&h_prev) + &self.fc1_b;
        cache.a1 = cache.z1.mapv(|v| v.max(0.0));
        cache
    }

    /// Forward pass, then backpropagate `dloss/dlogit = grad_logit(logit)` through time,
    /// adding parameter gradients into `grads`. Returns the logit.
    pub fn accumulate_gradients(
        &self,
        x: ArrayView2<f32>,
        grad_logit: impl FnOnce(f32) -> f32,
        grads: &mut RecurrentHead,
    ) -> Result<f32> {
        self.check(&x)?;
        let t_len = x.nrows();
        let hdim = self.hidden_size();
        let cache = self.run(x);
        let logit = self.fc2_w.dot(&cache.a1) + self.fc2_b;
        let dlogit = grad_logit(logit);

        grads.fc2_w.scaled_add(dlogit, &cache.a1);
        grads.fc2_b += dlogit;
        let mut dz1 = &self.fc2_w * dlogit;
        Zip::from(&mut dz1).and(&cache.z1).for_each(|d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        let h_last = cache.h.row(t_len - 1);
        grads
            .fc1_w
            .scaled_add(1.0, &outer(dz1.view(), h_last));
        grads.fc1_b += &dz1;

        let mut dh = self.fc1_w.t().dot(&dz1);
        let mut dc = Array1::<f32>::zeros(hdim);
        let mut dgates = Array2::<f32>::zeros((t_len, 4 * hdim));
        for t in (0..t_len).rev() {
            let (i, f, g, o, c) = (
                cache.i.row(t),
                cache.f.row(t),
                cache.g.row(t),
                cache.o.row(t),
                cache.c.row(t),
            );
            let tanh_c = c.mapv(f32::tanh);
            let d_o = &dh * &tanh_c;
            dc = dc + &dh * &o * &tanh_c.mapv(|v| 1.0 - v * v);
            let c_prev = if t > 0 {
                cache.c.row(t - 1).to_owned()
            } else {
                Array1::zeros(hdim)
            };
            let mut row = dgates.row_mut(t);
            {
                let mut di = row.slice_mut(s![0..hdim]);
                Zip::from(&mut di)
                    .and(&dc)
                    .and(&g)
                    .and(&i)
                    .for_each(|d, &dcv, &gv, &iv| *d = dcv * gv * iv * (1.0 - iv));
            }
            {
                let mut df = row.slice_mut(s![hdim..2 * hdim]);
                Zip::from(&mut df)
                    .and(&dc)
                    .and(&c_prev)
                    .and(&f)
                    .for_each(|d, &dcv, &cp, &fv| *d = dcv * cp * fv * (1.0 - fv));
            }
            {
                let mut dg = row.slice_mut(s![2 * hdim..3 * hdim]);
                Zip::from(&mut dg)
                    .and(&dc)
                    .and(&i)
                    .and(&g)
                    .for_each(|d, &dcv, &iv, &gv| *d = dcv * iv * (1.0 - gv * gv));
            }
            {
                let mut dov = row.slice_mut(s![3 * hdim..]);
                Zip::from(&mut dov)
                    .and(&d_o)
                    .and(&o)
                    .for_each(|d, &dov, &ov| *d = dov * ov * (1.0 - ov));
            }
            dc = &dc * &f;
            dh = self.w_hh.t().dot(&dgates.row(t));
        }

        // h_{t-1} for every step, zero for the first.
        let mut h_prev = Array2::<f32>::zeros((t_len, hdim));
        if t_len > 1 {
            h_prev
                .slice_mut(s![1.., ..])
                .assign(&cache.h.slice(s![..t_len - 1, ..]));
        }
        grads.w_ih.scaled_add(1.0, &dgates.t().dot(&x));
        grads.w_hh.scaled_add(1.0, &dgates.t().dot(&h_prev));
        grads.bias += &dgates.sum_axis(Axis(0));
        Ok(logit)
    }

    /// `self += alpha * other`, parameter by parameter.
    pub fn scaled_add(&mut self, alpha: f32, other: &RecurrentHead) {
        self.w_ih.scaled_add(alpha, &other.w_ih);
        self.w_hh.scaled_add(alpha, &other.w_hh);
        self.bias.scaled_add(alpha, &other.bias);
        self.fc1_w.scaled_add(alpha, &other.fc1_w);
        self.fc1_b.scaled_add(alpha, &other.fc1_b);
        self.fc2_w.scaled_add(alpha, &other.fc2_w);
        self.fc2_b += alpha * other.fc2_b;
    }

    /// L2 norm over all parameters.
    pub fn norm(&self) -> f32 {
        let sq = |a: f32, v: &f32| a + v * v;
        let total = self.w_ih.iter().fold(0.0, sq)
            + self.w_hh.iter().fold(0.0, sq)
            + self.bias.iter().fold(0.0, sq)
            + self.fc1_w.iter().fold(0.0, sq)
            + self.fc1_b.iter().fold(0.0, sq)
            + self.fc2_w.iter().fold(0.0, sq)
            + self.fc2_b * self.fc2_b;
        total.sqrt()
    }

    pub fn fill_zero(&mut self) {
        self.w_ih.fill(0.0);
        self.w_hh.fill(0.0);
        self.bias.fill(0.0);
        self.fc1_w.fill(0.0);
        self.fc1_b.fill(0.0);
        self.fc2_w.fill(0.0);
        self.fc2_b = 0.0;
    }
}

fn outer(a: ArrayView1<f32>, b: ArrayView1<f32>) -> Array2<f32> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}
