use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DeepError, ParamSet};
use crate::linalg::sigmoid;
use crate::seed::Rng;

/// Nonlinearity of the cell's input transform `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputTransform {
    /// `j = σ(·)`, as the gate equations are written.
    #[default]
    SigmoidInput,
    /// `j = tanh(·)`, the conventional cell.
    TanhStandard,
}

impl InputTransform {
    fn apply(self, z: f64) -> f64 {
        match self {
            InputTransform::SigmoidInput => sigmoid(z),
            InputTransform::TanhStandard => z.tanh(),
        }
    }

    /// Derivative expressed through the output value.
    fn deriv_from_output(self, j: f64) -> f64 {
        match self {
            InputTransform::SigmoidInput => j * (1.0 - j),
            InputTransform::TanhStandard => 1.0 - j * j,
        }
    }
}

/// Weights of one LSTM cell. Input matrices are `h × d`, recurrent matrices
/// `h × h`, biases length `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LSTMCellParams {
    pub w_xi: Array2<f64>,
    pub w_hi: Array2<f64>,
    pub b_i: Array1<f64>,
    pub w_xf: Array2<f64>,
    pub w_hf: Array2<f64>,
    pub b_f: Array1<f64>,
    pub w_xo: Array2<f64>,
    pub w_ho: Array2<f64>,
    pub b_o: Array1<f64>,
    pub w_xj: Array2<f64>,
    pub w_hj: Array2<f64>,
    pub b_j: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LSTMState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

impl LSTMState {
    pub fn zeros(hidden: usize) -> Self {
        LSTMState {
            h: Array1::zeros(hidden),
            c: Array1::zeros(hidden),
        }
    }
}

impl LSTMCellParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let wx = || Array2::zeros((hidden, input));
        let wh = || Array2::zeros((hidden, hidden));
        let b = || Array1::zeros(hidden);
        LSTMCellParams {
            w_xi: wx(),
            w_hi: wh(),
            b_i: b(),
            w_xf: wx(),
            w_hf: wh(),
            b_f: b(),
            w_xo: wx(),
            w_ho: wh(),
            b_o: b(),
            w_xj: wx(),
            w_hj: wh(),
            b_j: b(),
        }
    }

    /// He-normal weights (variance 2/fan_in), zero biases except the forget
    /// gate, which starts at 1.
    pub fn he_init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(input, hidden);
        let nx = Normal::new(0.0, (2.0 / input.max(1) as f64).sqrt()).expect("finite sd");
        let nh = Normal::new(0.0, (2.0 / hidden.max(1) as f64).sqrt()).expect("finite sd");
        for (wx, wh, _) in p.gates_mut() {
            wx.mapv_inplace(|_| nx.sample(rng));
            wh.mapv_inplace(|_| nh.sample(rng));
        }
        p.b_f.fill(1.0);
        p
    }

    pub fn input_size(&self) -> usize {
        self.w_xi.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hi.nrows()
    }

    /// Gate blocks in the order i, f, o, j.
    fn gates(&self) -> [(&Array2<f64>, &Array2<f64>, &Array1<f64>); 4] {
        [
            (&self.w_xi, &self.w_hi, &self.b_i),
            (&self.w_xf, &self.w_hf, &self.b_f),
            (&self.w_xo, &self.w_ho, &self.b_o),
            (&self.w_xj, &self.w_hj, &self.b_j),
        ]
    }

    fn gates_mut(&mut self) -> [(&mut Array2<f64>, &mut Array2<f64>, &mut Array1<f64>); 4] {
        [
            (&mut self.w_xi, &mut self.w_hi, &mut self.b_i),
            (&mut self.w_xf, &mut self.w_hf, &mut self.b_f),
            (&mut self.w_xo, &mut self.w_ho, &mut self.b_o),
            (&mut self.w_xj, &mut self.w_hj, &mut self.b_j),
        ]
    }

    pub(crate) fn validate(&self) -> Result<(), DeepError> {
        let (h, d) = (self.hidden_size(), self.input_size());
        for (wx, wh, b) in self.gates() {
            if wx.dim() != (h, d) || wh.dim() != (h, h) || b.len() != h {
                return Err(DeepError::ShapeMismatch("inconsistent LSTM gate shapes".into()));
            }
        }
        Ok(())
    }
}

impl ParamSet for LSTMCellParams {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.gates()
            .into_iter()
            .flat_map(|(wx, wh, b)| {
                [
                    wx.as_slice().expect("standard layout"),
                    wh.as_slice().expect("standard layout"),
                    b.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.gates_mut()
            .into_iter()
            .flat_map(|(wx, wh, b)| {
                [
                    wx.as_slice_mut().expect("standard layout"),
                    wh.as_slice_mut().expect("standard layout"),
                    b.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}

/// Everything one batched step needs for backpropagation. Rows are batch
/// members.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub x: Array2<f64>,
    pub h_prev: Array2<f64>,
    pub c_prev: Array2<f64>,
    pub gates: [Array2<f64>; 4],
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
}

/// One step for a batch: `x` is `B × d`, states are `B × h`.
pub(crate) fn forward_step(
    p: &LSTMCellParams,
    x: ArrayView2<'_, f64>,
    h_prev: ArrayView2<'_, f64>,
    c_prev: ArrayView2<'_, f64>,
    variant: InputTransform,
) -> StepCache {
    let gates = p.gates().map(|(wx, wh, b)| x.dot(&wx.t()) + h_prev.dot(&wh.t()) + b);
    let [mut gi, mut gf, mut go, mut gj] = gates;
    gi.mapv_inplace(sigmoid);
    gf.mapv_inplace(sigmoid);
    go.mapv_inplace(sigmoid);
    gj.mapv_inplace(|z| variant.apply(z));
    let c = &gf * &c_prev + &gi * &gj;
    let tanh_c = c.mapv(f64::tanh);
    let h = &tanh_c * &go;
    StepCache {
        x: x.to_owned(),
        h_prev: h_prev.to_owned(),
        c_prev: c_prev.to_owned(),
        gates: [gi, gf, go, gj],
        c,
        tanh_c,
        h,
    }
}

/// Backpropagates one step. `dh` and `dc` are the loss gradients with respect
/// to this step's outputs; gradients of the weights accumulate into `grads`.
/// Returns `(dx, dh_prev, dc_prev)`.
pub(crate) fn backward_step(
    p: &LSTMCellParams,
    cache: &StepCache,
    dh: &Array2<f64>,
    dc: &Array2<f64>,
    variant: InputTransform,
    grads: &mut LSTMCellParams,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let [gi, gf, go, gj] = &cache.gates;
    let dc_total = dc + &(dh * go * &cache.tanh_c.mapv(|t| 1.0 - t * t));
    let dpre = [
        &dc_total * gj * &gi.mapv(|v| v * (1.0 - v)),
        &dc_total * &cache.c_prev * &gf.mapv(|v| v * (1.0 - v)),
        dh * &cache.tanh_c * &go.mapv(|v| v * (1.0 - v)),
        &dc_total * gi * &gj.mapv(|v| variant.deriv_from_output(v)),
    ];
    let dc_prev = &dc_total * gf;
    let mut dx = Array2::zeros(cache.x.raw_dim());
    let mut dh_prev = Array2::zeros(cache.h_prev.raw_dim());
    for ((d, (wx, wh, _)), (gwx, gwh, gb)) in dpre.iter().zip(p.gates()).zip(grads.gates_mut()) {
        *gwx += &d.t().dot(&cache.x);
        *gwh += &d.t().dot(&cache.h_prev);
        *gb += &d.sum_axis(Axis(0));
        dx += &d.dot(wx);
        dh_prev += &d.dot(wh);
    }
    (dx, dh_prev, dc_prev)
}

/// Advances one cell by one input vector.
pub fn lstm_cell_step(
    p: &LSTMCellParams,
    x_t: ArrayView1<'_, f64>,
    state: &LSTMState,
    variant: InputTransform,
) -> Result<LSTMState, DeepError> {
    p.validate()?;
    let h = p.hidden_size();
    if x_t.len() != p.input_size() || state.h.len() != h || state.c.len() != h {
        return Err(DeepError::ShapeMismatch(format!(
            "cell expects input {} and state {h}, got {} and {}/{}",
            p.input_size(),
            x_t.len(),
            state.h.len(),
            state.c.len()
        )));
    }
    let out = forward_step(
        p,
        x_t.insert_axis(Axis(0)),
        state.h.view().insert_axis(Axis(0)),
        state.c.view().insert_axis(Axis(0)),
        variant,
    );
    Ok(LSTMState {
        h: out.h.row(0).to_owned(),
        c: out.c.row(0).to_owned(),
    })
}

/// Random parameters on a moderate scale, for gradient checks and property
/// tests.
#[cfg(test)]
pub(crate) fn random_params(input: usize, hidden: usize, rng: &mut Rng) -> LSTMCellParams {
    let mut p = LSTMCellParams::zeros(input, hidden);
    for s in p.param_slices_mut() {
        s.iter_mut().for_each(|v| *v = rand::Rng::random_range(rng, -0.8..0.8));
    }
    p
}
