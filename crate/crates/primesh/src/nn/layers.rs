use ndarray::{Array1, Array2, Array4, NdFloat};
use rand::Rng;

fn xavier<F: NdFloat>(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> F {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    F::from(rng.gen_range(-limit..limit)).unwrap()
}

// Biases draw from U(-1/sqrt(fan_in), 1/sqrt(fan_in)). A zero bias would
// pin dead-input pre-activations exactly onto the ReLU kink, where the
// finite-difference gradient checks probe a subgradient.
fn bias_init<F: NdFloat>(rng: &mut impl Rng, fan_in: usize) -> F {
    let limit = 1.0 / (fan_in as f64).sqrt();
    F::from(rng.gen_range(-limit..limit)).unwrap()
}

/// Fully connected layer, weights stored (out, in).
pub struct Linear<F> {
    pub w: Array2<F>,
    pub b: Array1<F>,
    pub gw: Array2<F>,
    pub gb: Array1<F>,
}

impl<F: NdFloat> Linear<F> {
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let w = Array2::from_shape_fn((output, input), |_| xavier(rng, input, output));
        let b = Array1::from_shape_fn(output, |_| bias_init(rng, input));
        Self { w, b, gw: Array2::zeros((output, input)), gb: Array1::zeros(output) }
    }

    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        x.dot(&self.w.t()) + &self.b
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Array2<F>, gy: &Array2<F>) -> Array2<F> {
        self.gw = &self.gw + &gy.t().dot(x);
        self.gb = &self.gb + &gy.sum_axis(ndarray::Axis(0));
        gy.dot(&self.w)
    }
}

/// 2D convolution over (batch, channels, height, width), square kernel,
/// padding `k/2`. Forward returns the im2col matrices for the backward pass.
pub struct Conv2d<F> {
    pub w: Array4<F>,
    pub b: Array1<F>,
    pub gw: Array4<F>,
    pub gb: Array1<F>,
    pub stride: usize,
    pub kernel: usize,
}

impl<F: NdFloat> Conv2d<F> {
    pub fn new(input: usize, output: usize, kernel: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let fan_in = input * kernel * kernel;
        let fan_out = output * kernel * kernel;
        let w = Array4::from_shape_fn((output, input, kernel, kernel), |_| {
            xavier(rng, fan_in, fan_out)
        });
        let b = Array1::from_shape_fn(output, |_| bias_init(rng, fan_in));
        Self {
            w,
            b,
            gw: Array4::zeros((output, input, kernel, kernel)),
            gb: Array1::zeros(output),
            stride,
            kernel,
        }
    }

    pub fn out_side(&self, side: usize) -> usize {
        (side + 2 * (self.kernel / 2) - self.kernel) / self.stride + 1
    }

    fn im2col(&self, x: &Array4<F>, sample: usize) -> Array2<F> {
        let (_, c, h, w) = x.dim();
        let k = self.kernel;
        let pad = k / 2;
        let (oh, ow) = (self.out_side(h), self.out_side(w));
        let mut col = Array2::zeros((c * k * k, oh * ow));
        for ci in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ki) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kj) as isize - pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            col[[row, oy * ow + ox]] = x[[sample, ci, iy as usize, ix as usize]];
                        }
                    }
                }
            }
        }
        col
    }

    pub fn forward(&self, x: &Array4<F>) -> (Array4<F>, Vec<Array2<F>>) {
        let (batch, _, h, w) = x.dim();
        let (oh, ow) = (self.out_side(h), self.out_side(w));
        let out_c = self.w.dim().0;
        let w_mat = self
            .w
            .view()
            .into_shape_with_order((out_c, self.w.len() / out_c))
            .unwrap();
        let mut y = Array4::zeros((batch, out_c, oh, ow));
        let mut cols = Vec::with_capacity(batch);
        for s in 0..batch {
            let col = self.im2col(x, s);
            let prod = w_mat.dot(&col);
            for c in 0..out_c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        y[[s, c, oy, ox]] = prod[[c, oy * ow + ox]] + self.b[c];
                    }
                }
            }
            cols.push(col);
        }
        (y, cols)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(
        &mut self,
        input_dim: (usize, usize, usize, usize),
        cols: &[Array2<F>],
        gy: &Array4<F>,
    ) -> Array4<F> {
        let (batch, c, h, w) = input_dim;
        let k = self.kernel;
        let pad = k / 2;
        let (_, out_c, oh, ow) = gy.dim();
        let w_mat = self
            .w
            .view()
            .into_shape_with_order((out_c, self.w.len() / out_c))
            .unwrap()
            .to_owned();
        let mut gx = Array4::zeros(input_dim);
        let mut gw_mat = Array2::<F>::zeros((out_c, c * k * k));
        for s in 0..batch {
            let mut gy_mat = Array2::zeros((out_c, oh * ow));
            for ci in 0..out_c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        gy_mat[[ci, oy * ow + ox]] = gy[[s, ci, oy, ox]];
                    }
                }
            }
            gw_mat = gw_mat + gy_mat.dot(&cols[s].t());
            let gcol = w_mat.t().dot(&gy_mat);
            // col2im: scatter-add back through the same sampling pattern.
            for ci in 0..c {
                for ki in 0..k {
                    for kj in 0..k {
                        let row = (ci * k + ki) * k + kj;
                        for oy in 0..oh {
                            let iy = (oy * self.stride + ki) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for ox in 0..ow {
                                let ix = (ox * self.stride + kj) as isize - pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                gx[[s, ci, iy as usize, ix as usize]] =
                                    gx[[s, ci, iy as usize, ix as usize]] + gcol[[row, oy * ow + ox]];
                            }
                        }
                    }
                }
            }
            for ci in 0..out_c {
                let mut total = F::zero();
                for oy in 0..oh {
                    for ox in 0..ow {
                        total = total + gy[[s, ci, oy, ox]];
                    }
                }
                self.gb[ci] = self.gb[ci] + total;
            }
        }
        let gw = gw_mat.into_shape_with_order(self.w.raw_dim()).unwrap();
        self.gw = &self.gw + &gw;
        gx
    }
}

/// Non-overlapping average pooling over (batch, 1, side, side); shrinks the
/// reference raster before the convolution stack on small profiles.
pub struct AvgPool {
    pub factor: usize,
}

impl AvgPool {
    pub fn forward<F: NdFloat>(&self, x: &Array4<F>) -> Array4<F> {
        if self.factor == 1 {
            return x.clone();
        }
        let (batch, c, h, w) = x.dim();
        let f = self.factor;
        let scale = F::from(1.0 / (f * f) as f64).unwrap();
        let mut y = Array4::zeros((batch, c, h / f, w / f));
        for s in 0..batch {
            for ci in 0..c {
                for oy in 0..h / f {
                    for ox in 0..w / f {
                        let mut total = F::zero();
                        for dy in 0..f {
                            for dx in 0..f {
                                total = total + x[[s, ci, oy * f + dy, ox * f + dx]];
                            }
                        }
                        y[[s, ci, oy, ox]] = total * scale;
                    }
                }
            }
        }
        y
    }
}

pub fn relu<F: NdFloat, D: ndarray::Dimension>(x: &ndarray::Array<F, D>) -> ndarray::Array<F, D> {
    x.mapv(|v| if v > F::zero() { v } else { F::zero() })
}

/// Input gradient of ReLU given its output and the output gradient.
pub fn relu_backward<F: NdFloat, D: ndarray::Dimension>(
    y: &ndarray::Array<F, D>,
    gy: &ndarray::Array<F, D>,
) -> ndarray::Array<F, D> {
    let mut gx = gy.clone();
    ndarray::Zip::from(&mut gx).and(y).for_each(|g, &out| {
        if out <= F::zero() {
            *g = F::zero();
        }
    });
    gx
}
