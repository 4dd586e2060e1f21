//! Encoder/decoder convolutional network with same-resolution skip
//! connections, shared by the correction and interpolation models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smokestep_tensor::{lit, Bound, Graph, ParamSet, Scalar, Tensor, Var};

use crate::error::{Error, Result};
use crate::fields::GridSpec;

/// Layer layout of a U-Net; `in_channels`/`out_channels` are set by the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub depth: usize,
    pub encoder_kernels: Vec<usize>,
    pub decoder_kernel: usize,
    pub channels: Vec<usize>,
    pub leaky_slope: f64,
    #[serde(default)]
    pub in_channels: usize,
    #[serde(default)]
    pub out_channels: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            depth: 7,
            encoder_kernels: vec![7, 5, 3, 3, 3, 3, 3],
            decoder_kernel: 3,
            channels: vec![16, 32, 64, 128, 256, 512, 512],
            leaky_slope: 0.2,
            in_channels: 0,
            out_channels: 0,
        }
    }
}

impl UNetConfig {
    /// Small layout used for CPU-sized runs.
    pub fn desk() -> Self {
        UNetConfig {
            depth: 4,
            encoder_kernels: vec![5, 3, 3, 3],
            decoder_kernel: 3,
            channels: vec![16, 24, 32, 48],
            leaky_slope: 0.2,
            in_channels: 0,
            out_channels: 0,
        }
    }

    /// Two-block layout for gradient checks.
    pub fn tiny() -> Self {
        UNetConfig {
            depth: 2,
            encoder_kernels: vec![3, 3],
            decoder_kernel: 3,
            channels: vec![3, 4],
            leaky_slope: 0.2,
            in_channels: 0,
            out_channels: 0,
        }
    }

    pub fn with_io(mut self, in_channels: usize, out_channels: usize) -> Self {
        self.in_channels = in_channels;
        self.out_channels = out_channels;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("U-Net depth must be at least 1".into()));
        }
        if self.encoder_kernels.len() != self.depth || self.channels.len() != self.depth {
            return Err(Error::Config(format!(
                "U-Net depth {} needs {} kernel sizes and channel counts, got {} and {}",
                self.depth,
                self.depth,
                self.encoder_kernels.len(),
                self.channels.len()
            )));
        }
        let odd = |k: usize| k % 2 == 1;
        if !self.encoder_kernels.iter().all(|&k| odd(k)) || !odd(self.decoder_kernel) {
            return Err(Error::Config("kernel sizes must be odd".into()));
        }
        if self.channels.contains(&0) || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config(format!("leaky slope {} outside [0, 1)", self.leaky_slope)));
        }
        Ok(())
    }

    /// Drops trailing blocks until the coarsest level keeps at least one cell.
    pub fn fit_to(&self, spec: &GridSpec) -> UNetConfig {
        let smallest = *spec.dims().iter().min().unwrap();
        let mut depth = self.depth;
        while depth > 1 && smallest >> (depth - 1) == 0 {
            depth -= 1;
        }
        let mut cfg = self.clone();
        cfg.depth = depth;
        cfg.encoder_kernels.truncate(depth);
        cfg.channels.truncate(depth);
        cfg
    }

    /// Every extent must halve cleanly at each pooling level.
    pub fn check_grid(&self, spec: &GridSpec) -> Result<()> {
        let f = 1usize << (self.depth - 1);
        if let Some(&n) = spec.dims().iter().find(|&&n| n % f != 0) {
            return Err(Error::Dimension(format!(
                "grid extent {n} is not divisible by {f} (U-Net depth {})",
                self.depth
            )));
        }
        Ok(())
    }
}

/// A U-Net bound to a spatial dimension, naming its parameters under `prefix`.
#[derive(Clone, Debug, PartialEq)]
pub struct UNet {
    pub cfg: UNetConfig,
    pub d: usize,
    pub prefix: String,
}

impl UNet {
    pub fn new(cfg: UNetConfig, d: usize, prefix: &str) -> Result<UNet> {
        cfg.validate()?;
        if !(2..=3).contains(&d) {
            return Err(Error::Dimension(format!("U-Net supports 2 or 3 dimensions, not {d}")));
        }
        Ok(UNet {
            cfg,
            d,
            prefix: prefix.to_string(),
        })
    }

    fn kernel_shape(&self, cout: usize, cin: usize, k: usize) -> Vec<usize> {
        let mut s = vec![cout, cin];
        s.extend(std::iter::repeat_n(k, self.d));
        s
    }

    /// `(name, weight shape)` for every convolution, in forward order.
    pub fn layers(&self) -> Vec<(String, Vec<usize>)> {
        let c = &self.cfg;
        let p = &self.prefix;
        let n = c.depth;
        let mut out = Vec::new();
        let mut cin = c.in_channels;
        for i in 0..n {
            out.push((format!("{p}enc{i}"), self.kernel_shape(c.channels[i], cin, c.encoder_kernels[i])));
            cin = c.channels[i];
        }
        for j in 0..n {
            if j + 1 < n {
                let level = n - 2 - j;
                let cout = c.channels[level];
                out.push((format!("{p}dec{j}"), self.kernel_shape(cout, cin + c.channels[level], c.decoder_kernel)));
                cin = cout;
            } else {
                out.push((format!("{p}dec{j}"), self.kernel_shape(c.channels[0], cin, c.decoder_kernel)));
                cin = c.channels[0];
            }
        }
        out.push((format!("{p}out"), self.kernel_shape(c.out_channels, cin, 1)));
        out
    }

    /// Fan-in scaled uniform weights and zero biases. The output layer
    /// starts at zero so a fresh network emits all-zero heads.
    pub fn init(&self, rng: &mut ChaCha8Rng) -> ParamSet<f32> {
        let mut p = ParamSet::new();
        let out_name = format!("{}out", self.prefix);
        for (name, shape) in self.layers() {
            let fan_in: usize = shape[1..].iter().product();
            let bound = (6.0 / fan_in as f64).sqrt();
            let len: usize = shape.iter().product();
            let w: Vec<f32> = if name == out_name {
                vec![0.0; len]
            } else {
                (0..len).map(|_| rng.gen_range(-bound..bound) as f32).collect()
            };
            let cout = shape[0];
            p.insert(format!("{name}.weight"), Tensor::new(shape, w));
            p.insert(format!("{name}.bias"), Tensor::zeros(&[cout]));
        }
        p
    }

    pub fn init_seeded(&self, seed: u64) -> ParamSet<f32> {
        self.init(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn conv<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound<T>, name: &str, x: Var) -> Var {
        let w = p.var(&format!("{name}.weight"));
        let b = p.var(&format!("{name}.bias"));
        g.conv(x, w, b)
    }

    /// Runs the network on `x` (`in_channels` planes) and returns the raw
    /// `out_channels` planes at the input resolution.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound<T>, x: Var) -> Var {
        let n = self.cfg.depth;
        let slope: T = lit(self.cfg.leaky_slope);
        let pre = &self.prefix;
        let mut skips = Vec::with_capacity(n);
        let mut h = x;
        for i in 0..n {
            h = self.conv(g, p, &format!("{pre}enc{i}"), h);
            h = g.leaky_relu(h, slope);
            if i + 1 < n {
                skips.push(h);
                h = g.max_pool2(h);
            }
        }
        for j in 0..n {
            if j + 1 < n {
                h = g.upsample2(h);
                h = g.concat(&[h, skips[n - 2 - j]]);
            }
            h = self.conv(g, p, &format!("{pre}dec{j}"), h);
            h = g.leaky_relu(h, slope);
        }
        self.conv(g, p, &format!("{pre}out"), h)
    }
}
