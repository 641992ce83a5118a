use autograd::{concat_channels, Tape, Tensor, Var};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::flowcore::{FlowField, Image, MIN_IMAGE_SIDE};

/// Total downsampling of the encoder.
pub const STRIDE: usize = 8;
pub const PARAM_BUDGET: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowNetConfig {
    pub feature_channels: usize,
    pub correlation_radius: usize,
    pub refinement_iterations: usize,
}

impl Default for FlowNetConfig {
    fn default() -> Self {
        FlowNetConfig {
            feature_channels: 32,
            correlation_radius: 3,
            refinement_iterations: 4,
        }
    }
}

impl FlowNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_channels < 4 || !self.feature_channels.is_multiple_of(2) {
            return Err(Error::invalid("net.feature_channels", "must be even and at least 4"));
        }
        if self.correlation_radius == 0 {
            return Err(Error::invalid("net.correlation_radius", "must be positive"));
        }
        if self.refinement_iterations == 0 {
            return Err(Error::invalid("net.refinement_iterations", "must be positive"));
        }
        Ok(())
    }
}

/// Anything that maps an image pair to a full-resolution flow through a tape.
/// Training and evaluation only go through this trait.
pub trait FlowModel: Send + Sync {
    fn init_params(&self, rng: &mut dyn RngCore) -> ParamSet;

    /// Flow `[2,H,W]` for the pair, using `params` bound on `tape` in the
    /// order of `init_params`.
    fn forward_var<'t>(&self, tape: &'t Tape, params: &[Var<'t>], i1: &Image, i2: &Image) -> Result<Var<'t>>;
}

/// Inference without gradients.
pub fn predict(model: &dyn FlowModel, params: &ParamSet, i1: &Image, i2: &Image) -> Result<FlowField> {
    let tape = Tape::new();
    let vars = params.bind(&tape, false);
    let flow = model.forward_var(&tape, &vars, i1, i2)?;
    FlowField::from_tensor(&flow.value())
}

/// Shared stride-2 encoder, local correlation at 1/8 scale, a convolutional
/// GRU refining a coarse flow, and bilinear upsampling.
#[derive(Clone, Debug)]
pub struct FlowNet {
    cfg: FlowNetConfig,
}

struct Widths {
    enc: [usize; 3],
    hidden: usize,
    context: usize,
    motion: usize,
    corr: usize,
}

impl FlowNet {
    pub fn new(cfg: FlowNetConfig) -> Result<Self> {
        cfg.validate()?;
        let net = FlowNet { cfg };
        let n = net.param_count();
        if n >= PARAM_BUDGET {
            return Err(Error::invalid(
                "net",
                format!("{n} parameters exceeds the budget of {PARAM_BUDGET}"),
            ));
        }
        Ok(net)
    }

    pub fn config(&self) -> &FlowNetConfig {
        &self.cfg
    }

    fn widths(&self) -> Widths {
        let f = self.cfg.feature_channels;
        let side = 2 * self.cfg.correlation_radius + 1;
        Widths {
            enc: [(3 * f / 8).max(4), (5 * f / 8).max(4), f],
            hidden: f / 2,
            context: f / 2,
            motion: f,
            corr: side * side,
        }
    }

    /// `(name, [cout, cin, k, k])` in binding order.
    fn layout(&self) -> Vec<(&'static str, [usize; 4])> {
        let w = self.widths();
        let gru_in = w.hidden + w.motion + w.context;
        vec![
            ("enc1", [w.enc[0], 3, 3, 3]),
            ("enc1b", [w.enc[0], w.enc[0], 3, 3]),
            ("enc2", [w.enc[1], w.enc[0], 3, 3]),
            ("enc2b", [w.enc[1], w.enc[1], 3, 3]),
            ("enc3", [w.enc[2], w.enc[1], 3, 3]),
            ("enc3b", [w.enc[2], w.enc[2], 3, 3]),
            ("context", [w.hidden + w.context, w.enc[2], 3, 3]),
            ("motion", [w.motion, w.corr + 2, 3, 3]),
            ("gru_z", [w.hidden, gru_in, 3, 3]),
            ("gru_r", [w.hidden, gru_in, 3, 3]),
            ("gru_q", [w.hidden, gru_in, 3, 3]),
            ("head", [2, w.hidden, 3, 3]),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.layout()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>() + s[0])
            .sum()
    }
}

fn rgb_var<'t>(tape: &'t Tape, img: &Image) -> Var<'t> {
    let x = tape.constant(img.to_tensor().map(|v| 2.0 * v - 1.0));
    if img.channels() == 1 {
        concat_channels(&[x, x, x])
    } else {
        x
    }
}

impl FlowModel for FlowNet {
    fn init_params(&self, rng: &mut dyn RngCore) -> ParamSet {
        let mut p = ParamSet::default();
        for (name, shape) in self.layout() {
            let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
            let gain = if name == "head" { 0.1 } else { 1.0 };
            let bound = gain * (3.0 / fan_in).sqrt();
            let n: usize = shape.iter().product();
            let w = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            p.push(format!("{name}.weight"), Tensor::new(&shape, w));
            p.push(format!("{name}.bias"), Tensor::zeros(&[shape[0]]));
        }
        p
    }

    fn forward_var<'t>(&self, tape: &'t Tape, params: &[Var<'t>], i1: &Image, i2: &Image) -> Result<Var<'t>> {
        let (h, w) = i1.size();
        if i2.size() != (h, w) {
            return Err(Error::ShapeMismatch(format!(
                "frames {:?} vs {:?}",
                i1.size(),
                i2.size()
            )));
        }
        if h < MIN_IMAGE_SIDE || w < MIN_IMAGE_SIDE {
            return Err(Error::invalid(
                "image",
                format!("{h}x{w} below the {MIN_IMAGE_SIDE}px minimum"),
            ));
        }
        let layout = self.layout();
        if params.len() != 2 * layout.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameter tensors, got {}",
                2 * layout.len(),
                params.len()
            )));
        }
        let index = |name: &str| layout.iter().position(|(n, _)| *n == name).expect("layer in layout");
        let conv = |name: &str, x: Var<'t>, stride: usize| {
            let i = index(name);
            let pad = layout[i].1[2] / 2;
            x.conv2d(params[2 * i], params[2 * i + 1], stride, pad)
        };
        let (hp, wp) = (h.div_ceil(STRIDE) * STRIDE, w.div_ceil(STRIDE) * STRIDE);
        let encode = |img: &Image| {
            let mut x = rgb_var(tape, img).pad_edge(hp, wp);
            for (down, refine) in [("enc1", "enc1b"), ("enc2", "enc2b")] {
                x = conv(down, x, 2).silu();
                x = x.add(conv(refine, x, 1).silu());
            }
            let x = conv("enc3", x, 2).silu();
            x.add(conv("enc3b", x, 1))
        };
        let wd = self.widths();
        // Unit-norm features, so the correlation below is a cosine similarity.
        let unit = |f: Var<'t>| {
            let norm = f.square().sum_channels().add_scalar(1e-6).sqrt();
            f.div(norm.repeat_channels(wd.enc[2]))
        };
        let (f1, f2) = (encode(i1), encode(i2));
        let (n1, n2) = (unit(f1), unit(f2));

        let ctx = conv("context", f1, 1);
        let mut hidden = ctx.slice_channels(0, wd.hidden).tanh();
        let context = ctx.slice_channels(wd.hidden, wd.hidden + wd.context).silu();
        let (hc, wc) = (hp / STRIDE, wp / STRIDE);
        let mut flow = tape.constant(Tensor::zeros(&[2, hc, wc]));
        // Correlation is a channel mean; scale back to the plain dot product.
        let corr_scale = wd.enc[2] as f64;
        for _ in 0..self.cfg.refinement_iterations {
            let (f2w, _) = n2.warp(flow);
            let corr = n1.correlation(f2w, self.cfg.correlation_radius).mul_scalar(corr_scale);
            let motion = conv("motion", concat_channels(&[corr, flow]), 1).silu();
            let x = concat_channels(&[motion, context]);
            let hx = concat_channels(&[hidden, x]);
            let z = conv("gru_z", hx, 1).sigmoid();
            let r = conv("gru_r", hx, 1).sigmoid();
            let q = conv("gru_q", concat_channels(&[r.mul(hidden), x]), 1).tanh();
            hidden = hidden.add(z.mul(q.sub(hidden)));
            flow = flow.add(conv("head", hidden, 1));
        }
        Ok(flow
            .upsample_bilinear(hp, wp)
            .mul_scalar(STRIDE as f64)
            .crop(0, 0, h, w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(h: usize, w: usize) -> (Image, Image) {
        let f = |s: f64| {
            let data = (0..3 * h * w)
                .map(|i| 0.5 + 0.4 * ((i as f64) * 0.37 + s).sin())
                .collect();
            Image::new(3, h, w, data).unwrap()
        };
        (f(0.0), f(1.0))
    }

    #[test]
    fn default_net_fits_budget() {
        let net = FlowNet::new(FlowNetConfig::default()).unwrap();
        let p = net.init_params(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(p.len(), net.param_count());
        assert!(p.len() < PARAM_BUDGET);
    }

    #[test]
    fn output_matches_input_size_and_is_deterministic() {
        let net = FlowNet::new(FlowNetConfig::default()).unwrap();
        let p = net.init_params(&mut ChaCha8Rng::seed_from_u64(0));
        for (h, w) in [(8, 8), (20, 13), (64, 64)] {
            let (a, b) = pair(h, w);
            let f1 = predict(&net, &p, &a, &b).unwrap();
            let f2 = predict(&net, &p, &a, &b).unwrap();
            assert_eq!(f1.size(), (h, w));
            assert_eq!(f1, f2);
        }
    }

    #[test]
    fn grey_input_and_small_images() {
        let net = FlowNet::new(FlowNetConfig::default()).unwrap();
        let p = net.init_params(&mut ChaCha8Rng::seed_from_u64(0));
        let g = Image::filled(1, 8, 8, 0.3).unwrap();
        assert_eq!(predict(&net, &p, &g, &g).unwrap().size(), (8, 8));
        assert!(FlowNet::new(FlowNetConfig {
            feature_channels: 3,
            ..Default::default()
        })
        .is_err());
    }
}
