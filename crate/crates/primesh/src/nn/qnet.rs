use std::io::{Read, Write};

use ndarray::{Array2, Array4, ArrayD, Axis, NdFloat};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::Observation;
use crate::error::{Error, Result};
use crate::nn::layers::{relu, relu_backward, AvgPool, Conv2d, Linear};

/// Shape of the three-stream Q-network. The reference stream pools the
/// raster by `input_pool`, then applies three stride-2 convolutions; the
/// parameter stream is two FC layers; the step stream one FC layer. The
/// streams concatenate into a three-layer head emitting one value per
/// action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetConfig {
    pub reference_side: usize,
    pub input_pool: usize,
    pub conv_channels: [usize; 3],
    pub conv_kernels: [usize; 3],
    pub param_len: usize,
    pub param_widths: [usize; 2],
    pub steps_total: usize,
    pub step_width: usize,
    pub head_widths: [usize; 2],
    pub actions: usize,
}

impl NetConfig {
    /// Full-size profile for the primitive agent.
    pub fn paper_prim() -> Self {
        Self {
            reference_side: 128,
            input_pool: 1,
            conv_channels: [16, 32, 64],
            conv_kernels: [5, 3, 3],
            param_len: 162,
            param_widths: [256, 128],
            steps_total: 300,
            step_width: 128,
            head_widths: [512, 256],
            actions: 756,
        }
    }

    pub fn paper_mesh() -> Self {
        Self { param_len: 80, steps_total: 100, actions: 360, ..Self::paper_prim() }
    }

    /// Small profile sized for single-core desk runs.
    pub fn desk_prim() -> Self {
        Self {
            reference_side: 128,
            input_pool: 8,
            conv_channels: [4, 8, 8],
            conv_kernels: [5, 3, 3],
            param_len: 162,
            param_widths: [96, 96],
            steps_total: 300,
            step_width: 64,
            head_widths: [128, 64],
            actions: 756,
        }
    }

    pub fn desk_mesh() -> Self {
        Self { param_len: 80, steps_total: 100, actions: 360, ..Self::desk_prim() }
    }

    /// Minimal shape for float64 gradient checks.
    pub fn tiny(actions: usize) -> Self {
        Self {
            reference_side: 8,
            input_pool: 1,
            conv_channels: [2, 3, 4],
            conv_kernels: [5, 3, 3],
            param_len: 12,
            param_widths: [8, 8],
            steps_total: 10,
            step_width: 8,
            head_widths: [16, 8],
            actions,
        }
    }

    pub fn conv_input_side(&self) -> usize {
        self.reference_side / self.input_pool
    }

    pub fn conv_sides(&self) -> [usize; 3] {
        let mut side = self.conv_input_side();
        let mut out = [0; 3];
        for i in 0..3 {
            let k = self.conv_kernels[i];
            side = (side + 2 * (k / 2) - k) / 2 + 1;
            out[i] = side;
        }
        out
    }

    pub fn flatten_len(&self) -> usize {
        let sides = self.conv_sides();
        self.conv_channels[2] * sides[2] * sides[2]
    }

    pub fn concat_len(&self) -> usize {
        self.flatten_len() + self.param_widths[1] + self.step_width
    }

    fn to_words(self) -> [u32; 16] {
        [
            self.reference_side as u32,
            self.input_pool as u32,
            self.conv_channels[0] as u32,
            self.conv_channels[1] as u32,
            self.conv_channels[2] as u32,
            self.conv_kernels[0] as u32,
            self.conv_kernels[1] as u32,
            self.conv_kernels[2] as u32,
            self.param_len as u32,
            self.param_widths[0] as u32,
            self.param_widths[1] as u32,
            self.steps_total as u32,
            self.step_width as u32,
            self.head_widths[0] as u32,
            self.head_widths[1] as u32,
            self.actions as u32,
        ]
    }

    fn from_words(w: [u32; 16]) -> Self {
        Self {
            reference_side: w[0] as usize,
            input_pool: w[1] as usize,
            conv_channels: [w[2] as usize, w[3] as usize, w[4] as usize],
            conv_kernels: [w[5] as usize, w[6] as usize, w[7] as usize],
            param_len: w[8] as usize,
            param_widths: [w[9] as usize, w[10] as usize],
            steps_total: w[11] as usize,
            step_width: w[12] as usize,
            head_widths: [w[13] as usize, w[14] as usize],
            actions: w[15] as usize,
        }
    }
}

/// A batch of observations split into the three network inputs.
pub struct ObsBatch<F> {
    pub refs: Array4<F>,
    pub params: Array2<F>,
    pub steps: Array2<F>,
}

impl<F: NdFloat> ObsBatch<F> {
    pub fn new(cfg: &NetConfig, observations: &[&Observation]) -> Self {
        let batch = observations.len();
        let side = cfg.reference_side;
        let mut refs = Array4::zeros((batch, 1, side, side));
        let mut params = Array2::zeros((batch, cfg.param_len));
        let mut steps = Array2::zeros((batch, cfg.steps_total));
        for (s, obs) in observations.iter().enumerate() {
            assert_eq!(obs.reference.len(), side * side, "reference raster size mismatch");
            assert_eq!(obs.params.len(), cfg.param_len, "parameter length mismatch");
            assert_eq!(obs.steps_total, cfg.steps_total, "step space mismatch");
            for (i, &v) in obs.reference.iter().enumerate() {
                refs[[s, 0, i / side, i % side]] = F::from(v).unwrap();
            }
            for (i, &v) in obs.params.iter().enumerate() {
                params[[s, i]] = F::from(v).unwrap();
            }
            if obs.step < cfg.steps_total {
                steps[[s, obs.step]] = F::one();
            }
        }
        Self { refs, params, steps }
    }

    pub fn len(&self) -> usize {
        self.refs.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Forward intermediates kept for the backward pass.
pub struct Cache<F> {
    pooled: Array4<F>,
    cols1: Vec<Array2<F>>,
    y1: Array4<F>,
    cols2: Vec<Array2<F>>,
    y2: Array4<F>,
    cols3: Vec<Array2<F>>,
    y3: Array4<F>,
    params_in: Array2<F>,
    param_h1: Array2<F>,
    param_h2: Array2<F>,
    steps_in: Array2<F>,
    step_h: Array2<F>,
    concat: Array2<F>,
    h1: Array2<F>,
    h2: Array2<F>,
}

pub struct QNetwork<F> {
    pub cfg: NetConfig,
    pool: AvgPool,
    conv1: Conv2d<F>,
    conv2: Conv2d<F>,
    conv3: Conv2d<F>,
    param_fc1: Linear<F>,
    param_fc2: Linear<F>,
    step_fc: Linear<F>,
    head1: Linear<F>,
    head2: Linear<F>,
    head3: Linear<F>,
}

impl<F: NdFloat> QNetwork<F> {
    pub fn new(cfg: NetConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let cc = cfg.conv_channels;
        let ck = cfg.conv_kernels;
        Self {
            cfg,
            pool: AvgPool { factor: cfg.input_pool },
            conv1: Conv2d::new(1, cc[0], ck[0], 2, rng),
            conv2: Conv2d::new(cc[0], cc[1], ck[1], 2, rng),
            conv3: Conv2d::new(cc[1], cc[2], ck[2], 2, rng),
            param_fc1: Linear::new(cfg.param_len, cfg.param_widths[0], rng),
            param_fc2: Linear::new(cfg.param_widths[0], cfg.param_widths[1], rng),
            step_fc: Linear::new(cfg.steps_total, cfg.step_width, rng),
            head1: Linear::new(cfg.concat_len(), cfg.head_widths[0], rng),
            head2: Linear::new(cfg.head_widths[0], cfg.head_widths[1], rng),
            head3: Linear::new(cfg.head_widths[1], cfg.actions, rng),
        }
    }

    /// Q-values for a batch plus the cache needed to backpropagate.
    pub fn forward(&self, batch: &ObsBatch<F>) -> (Array2<F>, Cache<F>) {
        let b = batch.len();
        let pooled = self.pool.forward(&batch.refs);
        let (z1, cols1) = self.conv1.forward(&pooled);
        let y1 = relu(&z1);
        let (z2, cols2) = self.conv2.forward(&y1);
        let y2 = relu(&z2);
        let (z3, cols3) = self.conv3.forward(&y2);
        let y3 = relu(&z3);
        let flat = y3.clone().into_shape_with_order((b, self.cfg.flatten_len())).unwrap();
        let param_h1 = relu(&self.param_fc1.forward(&batch.params));
        let param_h2 = relu(&self.param_fc2.forward(&param_h1));
        let step_h = relu(&self.step_fc.forward(&batch.steps));
        let mut concat = Array2::zeros((b, self.cfg.concat_len()));
        concat.slice_mut(ndarray::s![.., ..flat.dim().1]).assign(&flat);
        let p0 = flat.dim().1;
        concat
            .slice_mut(ndarray::s![.., p0..p0 + param_h2.dim().1])
            .assign(&param_h2);
        concat
            .slice_mut(ndarray::s![.., p0 + param_h2.dim().1..])
            .assign(&step_h);
        let h1 = relu(&self.head1.forward(&concat));
        let h2 = relu(&self.head2.forward(&h1));
        let q = self.head3.forward(&h2);
        let cache = Cache {
            pooled,
            cols1,
            y1,
            cols2,
            y2,
            cols3,
            y3,
            params_in: batch.params.clone(),
            param_h1,
            param_h2,
            steps_in: batch.steps.clone(),
            step_h,
            concat,
            h1,
            h2,
        };
        (q, cache)
    }

    /// Q-values only, cache discarded.
    pub fn q_values(&self, batch: &ObsBatch<F>) -> Array2<F> {
        self.forward(batch).0
    }

    /// Q-values for a single observation as f64.
    pub fn q_values_single(&self, obs: &Observation) -> Vec<f64> {
        let batch = ObsBatch::new(&self.cfg, &[obs]);
        let q = self.q_values(&batch);
        q.index_axis(Axis(0), 0).iter().map(|v| v.to_f64().unwrap()).collect()
    }

    /// Accumulates parameter gradients for `d loss / d q`.
    pub fn backward(&mut self, cache: &Cache<F>, dq: &Array2<F>) {
        let b = dq.dim().0;
        let gh2 = relu_backward(&cache.h2, &self.head3.backward(&cache.h2, dq));
        let gh1 = relu_backward(&cache.h1, &self.head2.backward(&cache.h1, &gh2));
        let gconcat = self.head1.backward(&cache.concat, &gh1);
        let flat_len = self.cfg.flatten_len();
        let param_len = self.cfg.param_widths[1];
        let gflat = gconcat.slice(ndarray::s![.., ..flat_len]).to_owned();
        let gparam2 = gconcat.slice(ndarray::s![.., flat_len..flat_len + param_len]).to_owned();
        let gstep = gconcat.slice(ndarray::s![.., flat_len + param_len..]).to_owned();

        let gstep = relu_backward(&cache.step_h, &gstep);
        self.step_fc.backward(&cache.steps_in, &gstep);

        let gparam2 = relu_backward(&cache.param_h2, &gparam2);
        let gparam1 =
            relu_backward(&cache.param_h1, &self.param_fc2.backward(&cache.param_h1, &gparam2));
        self.param_fc1.backward(&cache.params_in, &gparam1);

        let gy3 = gflat.into_shape_with_order(cache.y3.raw_dim()).unwrap();
        let gz3 = relu_backward(&cache.y3, &gy3);
        let gy2 = self.conv3.backward(cache.y2.dim(), &cache.cols3, &gz3);
        let gz2 = relu_backward(&cache.y2, &gy2);
        let gy1 = self.conv2.backward(cache.y1.dim(), &cache.cols2, &gz2);
        let gz1 = relu_backward(&cache.y1, &gy1);
        let _ = self.conv1.backward(cache.pooled.dim(), &cache.cols1, &gz1);
        let _ = b;
    }

    /// Visits every (name, parameter, gradient) triple in a fixed order.
    pub fn visit_params_mut(
        &mut self,
        f: &mut dyn FnMut(&str, ndarray::ArrayViewMutD<F>, ndarray::ArrayViewMutD<F>),
    ) {
        macro_rules! visit {
            ($name:literal, $layer:expr) => {
                f(
                    concat!($name, ".weight"),
                    $layer.w.view_mut().into_dyn(),
                    $layer.gw.view_mut().into_dyn(),
                );
                f(
                    concat!($name, ".bias"),
                    $layer.b.view_mut().into_dyn(),
                    $layer.gb.view_mut().into_dyn(),
                );
            };
        }
        visit!("conv1", self.conv1);
        visit!("conv2", self.conv2);
        visit!("conv3", self.conv3);
        visit!("param_fc1", self.param_fc1);
        visit!("param_fc2", self.param_fc2);
        visit!("step_fc", self.step_fc);
        visit!("head1", self.head1);
        visit!("head2", self.head2);
        visit!("head3", self.head3);
    }

    pub fn zero_grads(&mut self) {
        self.visit_params_mut(&mut |_, _, mut grad| grad.fill(F::zero()));
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params_mut(&mut |_, p, _| n += p.len());
        n
    }

    pub fn flat_params(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params_mut(&mut |_, p, _| out.extend(p.iter().map(|v| v.to_f64().unwrap())));
        out
    }

    pub fn set_flat_params(&mut self, values: &[f64]) {
        let mut offset = 0;
        self.visit_params_mut(&mut |_, mut p, _| {
            for v in p.iter_mut() {
                *v = F::from(values[offset]).unwrap();
                offset += 1;
            }
        });
        assert_eq!(offset, values.len());
    }

    pub fn flat_grads(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params_mut(&mut |_, _, g| out.extend(g.iter().map(|v| v.to_f64().unwrap())));
        out
    }

    /// Named copies of every parameter tensor.
    pub fn export_params(&mut self) -> Vec<(String, ArrayD<F>)> {
        let mut out = Vec::new();
        self.visit_params_mut(&mut |name, p, _| out.push((name.to_string(), p.to_owned())));
        out
    }

    pub fn import_params(&mut self, params: &[(String, ArrayD<F>)]) {
        let mut i = 0;
        self.visit_params_mut(&mut |name, mut p, _| {
            let (src_name, src) = &params[i];
            assert_eq!(name, src_name, "parameter order mismatch");
            p.assign(src);
            i += 1;
        });
        assert_eq!(i, params.len());
    }

    /// Checkpoint layout: magic "QNCK", u32 version, 16 u32 config words,
    /// u32 tensor count, then per tensor: u32 name length, name bytes,
    /// u32 ndim, u32 dims, f32 little-endian payload.
    pub fn write_checkpoint<W: Write>(&mut self, out: &mut W) -> Result<()> {
        out.write_all(b"QNCK")?;
        out.write_all(&1u32.to_le_bytes())?;
        for w in self.cfg.to_words() {
            out.write_all(&w.to_le_bytes())?;
        }
        let params = self.export_params();
        out.write_all(&(params.len() as u32).to_le_bytes())?;
        for (name, tensor) in params {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&(tensor.ndim() as u32).to_le_bytes())?;
            for d in tensor.shape() {
                out.write_all(&(*d as u32).to_le_bytes())?;
            }
            for v in tensor.iter() {
                out.write_all(&(v.to_f64().unwrap() as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic).map_err(|_| Error::format("checkpoint", "truncated"))?;
        if &magic != b"QNCK" {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let mut word = [0u8; 4];
        let mut read_u32 = |input: &mut R| -> Result<u32> {
            input.read_exact(&mut word).map_err(|_| Error::format("checkpoint", "truncated"))?;
            Ok(u32::from_le_bytes(word))
        };
        let version = read_u32(input)?;
        if version != 1 {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let mut words = [0u32; 16];
        for w in &mut words {
            *w = read_u32(input)?;
        }
        let cfg = NetConfig::from_words(words);
        let mut net = Self::new(cfg, 0);
        let count = read_u32(input)? as usize;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(input)? as usize;
            let mut name = vec![0u8; name_len];
            input.read_exact(&mut name).map_err(|_| Error::format("checkpoint", "truncated"))?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::format("checkpoint", "invalid tensor name"))?;
            let ndim = read_u32(input)? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(read_u32(input)? as usize);
            }
            let len: usize = dims.iter().product();
            let mut data = Vec::with_capacity(len);
            let mut buf = [0u8; 4];
            for _ in 0..len {
                input.read_exact(&mut buf).map_err(|_| Error::format("checkpoint", "truncated"))?;
                data.push(F::from(f32::from_le_bytes(buf)).unwrap());
            }
            let tensor = ArrayD::from_shape_vec(ndarray::IxDyn(&dims), data)
                .map_err(|_| Error::format("checkpoint", "tensor shape mismatch"))?;
            params.push((name, tensor));
        }
        net.import_params(&params);
        Ok(net)
    }
}

/// Current/target network pair for double Q-learning.
pub struct DdqnPair<F> {
    pub current: QNetwork<F>,
    pub target: QNetwork<F>,
}

impl<F: NdFloat> DdqnPair<F> {
    pub fn new(cfg: NetConfig, seed: u64) -> Self {
        let mut current = QNetwork::new(cfg, seed);
        let mut target = QNetwork::new(cfg, seed.wrapping_add(1));
        let params = current.export_params();
        target.import_params(&params);
        Self { current, target }
    }

    /// Hard copy of the current parameters into the target network.
    pub fn sync_target(&mut self) {
        let params = self.current.export_params();
        self.target.import_params(&params);
    }
}
