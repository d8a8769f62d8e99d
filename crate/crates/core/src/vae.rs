//! Gaussian VAE with an isotropic decoder variance, trained with the
//! denoising criterion (noisy encoder input, clean reconstruction target).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::nn::{AdamState, Mlp, Tape};
use crate::rng;

pub const DEFAULT_GAMMA2: f64 = 0.1;

/// Encoder output for one input: a diagonal Gaussian over the latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussian {
    pub mean: Vec<f64>,
    /// diagonal variances, strictly positive
    pub var: Vec<f64>,
}

impl LatentGaussian {
    /// `mean + sqrt(var) ⊙ noise` for standard normal `noise`.
    pub fn reparameterize(&self, noise: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.mean.len(), noise.len())?;
        Ok(self
            .mean
            .iter()
            .zip(&self.var)
            .zip(noise)
            .map(|((m, v), e)| m + libm::sqrt(*v) * e)
            .collect())
    }
}

/// `KL(N(mean, diag(var)) ‖ N(0, I))`.
pub fn kl_to_standard_normal(mean: &[f64], var: &[f64]) -> f64 {
    0.5 * mean
        .iter()
        .zip(var)
        .map(|(m, v)| m * m + v - 1.0 - libm::log(*v))
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    encoder: Mlp,
    decoder: Mlp,
    gamma2: f64,
    sigma_dvae: f64,
}

impl VaeModel {
    /// Fresh model: encoder `d → hidden… → 2l`, decoder `l → …hidden → d`.
    pub fn new<R: Rng + ?Sized>(
        data_dim: usize,
        latent_dim: usize,
        hidden: &[usize],
        sigma_dvae: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut enc_sizes = vec![data_dim];
        enc_sizes.extend_from_slice(hidden);
        enc_sizes.push(2 * latent_dim);
        let mut dec_sizes = vec![latent_dim];
        dec_sizes.extend(hidden.iter().rev());
        dec_sizes.push(data_dim);
        let encoder = Mlp::glorot(&enc_sizes, rng)?;
        let decoder = Mlp::glorot(&dec_sizes, rng)?;
        VaeModel::from_parts(encoder, decoder, DEFAULT_GAMMA2, sigma_dvae)
    }

    pub fn from_parts(encoder: Mlp, decoder: Mlp, gamma2: f64, sigma_dvae: f64) -> Result<Self> {
        if !(gamma2 > 0.0) || !gamma2.is_finite() {
            return Err(Error::invalid("gamma2", "must be positive and finite"));
        }
        if !(sigma_dvae >= 0.0) {
            return Err(Error::invalid("sigma_dvae", "must be non-negative"));
        }
        let latent = decoder.input_dim();
        Error::check_dim(2 * latent, encoder.output_dim())?;
        Error::check_dim(decoder.output_dim(), encoder.input_dim())?;
        Ok(VaeModel {
            encoder,
            decoder,
            gamma2,
            sigma_dvae,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.decoder.output_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.input_dim()
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    pub fn sigma_dvae(&self) -> f64 {
        self.sigma_dvae
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn encoder_mut(&mut self) -> &mut Mlp {
        &mut self.encoder
    }

    pub fn decoder_mut(&mut self) -> &mut Mlp {
        &mut self.decoder
    }

    pub fn set_gamma2(&mut self, gamma2: f64) -> Result<()> {
        if !(gamma2 > 0.0) || !gamma2.is_finite() {
            return Err(Error::invalid("gamma2", "must be positive and finite"));
        }
        self.gamma2 = gamma2;
        Ok(())
    }

    /// `q_φ(z|x) = N(μφ(x), diag(exp(logvar(x))))`.
    pub fn encode(&self, x: &[f64]) -> Result<LatentGaussian> {
        let out = self.encoder.forward_output(x)?;
        let l = self.latent_dim();
        Ok(LatentGaussian {
            mean: out[..l].to_vec(),
            var: out[l..].iter().map(|v| libm::exp(*v)).collect(),
        })
    }

    pub fn encoder_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.encoder.forward_output(x)?;
        out.truncate(self.latent_dim());
        Ok(out)
    }

    /// Decoder mean `μθ(z)`; no clamping.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.decoder.forward_output(z)
    }

    pub fn decode_with_tape(&self, z: &[f64]) -> Result<(Vec<f64>, Tape)> {
        self.decoder.forward(z)
    }

    /// `Jᵀ g` where `J` is the Jacobian of `μθ` at the taped point.
    pub fn decoder_vjp(&self, tape: &Tape, g: &[f64]) -> Result<Vec<f64>> {
        self.decoder.input_grad(tape, g)
    }

    /// Negative ELBO averaged over `batch` row-major clean images, with the
    /// corruption and reparameterization noise supplied by the caller.
    pub fn loss_and_grads_with_noise(&self, clean: &[f64], batch: usize, noise: &NoiseDraws) -> Result<(LossBreakdown, Gradients)> {
        let (d, l) = (self.data_dim(), self.latent_dim());
        if batch == 0 {
            return Err(Error::invalid("batch", "must be non-empty"));
        }
        Error::check_dim(batch * d, clean.len())?;
        Error::check_dim(batch * d, noise.corruption.len())?;
        Error::check_dim(batch * l, noise.latent.len())?;
        let inv_n = 1.0 / batch as f64;

        let noisy: Vec<f64> = clean
            .iter()
            .zip(&noise.corruption)
            .map(|(x, e)| x + self.sigma_dvae * e)
            .collect();
        let enc = self.encoder.forward_batch(&noisy, batch)?;
        let enc_out = enc.output();

        let mut z = vec![0.0; batch * l];
        let mut std = vec![0.0; batch * l];
        let mut kl = 0.0;
        for s in 0..batch {
            let row = &enc_out[s * 2 * l..(s + 1) * 2 * l];
            for k in 0..l {
                let (mu, lv) = (row[k], row[l + k]);
                let sd = libm::exp(0.5 * lv);
                std[s * l + k] = sd;
                z[s * l + k] = mu + sd * noise.latent[s * l + k];
                kl += 0.5 * (mu * mu + sd * sd - 1.0 - lv);
            }
        }

        let dec = self.decoder.forward_batch(&z, batch)?;
        let recon_mean = dec.output();
        let log_g2 = libm::log(self.gamma2);
        let mut sq = 0.0;
        let mut out_grad = vec![0.0; batch * d];
        let scale = inv_n / self.gamma2;
        for ((g, m), x) in out_grad.iter_mut().zip(recon_mean).zip(clean) {
            let r = m - x;
            sq += r * r;
            *g = scale * r;
        }
        let reconstruction = inv_n * (0.5 * (d * batch) as f64 * (libm::log(2.0 * PI) + log_g2) + sq / (2.0 * self.gamma2));
        let kl = kl * inv_n;

        let mut dec_grads = vec![0.0; self.decoder.num_params()];
        let dz = self
            .decoder
            .backward_batch(&dec, &out_grad, &mut dec_grads, true)?
            .expect("input gradient requested");

        let mut enc_out_grad = vec![0.0; batch * 2 * l];
        for s in 0..batch {
            let row = &enc_out[s * 2 * l..(s + 1) * 2 * l];
            for k in 0..l {
                let i = s * l + k;
                let (mu, sd) = (row[k], std[i]);
                enc_out_grad[s * 2 * l + k] = dz[i] + inv_n * mu;
                enc_out_grad[s * 2 * l + l + k] = dz[i] * noise.latent[i] * 0.5 * sd + inv_n * 0.5 * (sd * sd - 1.0);
            }
        }
        let mut enc_grads = vec![0.0; self.encoder.num_params()];
        self.encoder.backward_batch(&enc, &enc_out_grad, &mut enc_grads, false)?;

        let log_gamma2 = inv_n * (0.5 * (d * batch) as f64 - sq / (2.0 * self.gamma2));
        Ok((
            LossBreakdown {
                total: reconstruction + kl,
                reconstruction,
                kl,
            },
            Gradients {
                encoder: enc_grads,
                decoder: dec_grads,
                log_gamma2,
            },
        ))
    }

    /// Denoising negative ELBO with one Monte-Carlo draw of the corruption
    /// and of the latent code per sample.
    pub fn dvae_loss_and_grads<R: Rng + ?Sized>(&self, clean: &[f64], batch: usize, rng: &mut R) -> Result<(LossBreakdown, Gradients)> {
        let noise = NoiseDraws::sample(rng, batch, self.data_dim(), self.latent_dim());
        self.loss_and_grads_with_noise(clean, batch, &noise)
    }

    /// Decoder means of `n` draws `z ~ N(0, I)`.
    pub fn sample_prior<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::invalid("n", "must be at least 1"));
        }
        (0..n)
            .map(|_| self.decode(&rng::standard_normal_vec(rng, self.latent_dim())))
            .collect()
    }

    /// Draws from the full generative model `x = μθ(z) + γ ε`.
    pub fn sample_prior_with_noise<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let gamma = libm::sqrt(self.gamma2);
        let means = self.sample_prior(n, rng)?;
        Ok(means
            .into_iter()
            .map(|mut x| {
                let eps = rng::standard_normal_vec(rng, x.len());
                linalg::axpy(gamma, &eps, &mut x);
                x
            })
            .collect())
    }
}

/// Corruption noise `ε` (`batch × d`) and reparameterization noise `ε'`
/// (`batch × l`), both standard normal.
#[derive(Debug, Clone)]
pub struct NoiseDraws {
    pub corruption: Vec<f64>,
    pub latent: Vec<f64>,
}

impl NoiseDraws {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, batch: usize, data_dim: usize, latent_dim: usize) -> Self {
        NoiseDraws {
            corruption: rng::standard_normal_vec(rng, batch * data_dim),
            latent: rng::standard_normal_vec(rng, batch * latent_dim),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub encoder: Vec<f64>,
    pub decoder: Vec<f64>,
    pub log_gamma2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// corruption std on the `[0, 1]` pixel scale
    pub sigma_dvae: f64,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 128,
            learning_rate: 1e-4,
            sigma_dvae: 15.0 / 255.0,
            latent_dim: 8,
            hidden: vec![500, 500],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: VaeModel,
    /// mean negative ELBO per epoch
    pub epoch_losses: Vec<f64>,
}

/// Train a DVAE on `count` row-major images of dimension `data_dim`.
pub fn train_dvae(images: &[f64], data_dim: usize, config: &TrainConfig) -> Result<TrainOutcome> {
    train_dvae_with(images, data_dim, config, |_, _| {})
}

/// Like [`train_dvae`], calling `on_epoch(epoch, mean_loss)` after every
/// epoch.
pub fn train_dvae_with<F>(images: &[f64], data_dim: usize, config: &TrainConfig, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, f64),
{
    if data_dim == 0 || images.is_empty() || images.len() % data_dim != 0 {
        return Err(Error::invalid("images", "need a non-empty whole number of images"));
    }
    if config.epochs == 0 || config.batch_size == 0 || config.latent_dim == 0 {
        return Err(Error::invalid("config", "epochs, batch size and latent dim must be positive"));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::invalid("learning_rate", "must be positive"));
    }
    if images.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("images", "pixels must lie in [0, 1]"));
    }
    let count = images.len() / data_dim;
    let mut init_rng = rng::stream(config.seed, 0);
    let mut noise_rng = rng::stream(config.seed, 1);
    let mut order_rng = rng::stream(config.seed, 2);

    let mut model = VaeModel::new(data_dim, config.latent_dim, &config.hidden, config.sigma_dvae, &mut init_rng)?;
    let mut enc_adam = AdamState::new(model.encoder.num_params(), config.learning_rate);
    let mut dec_adam = AdamState::new(model.decoder.num_params(), config.learning_rate);
    let mut g2_adam = AdamState::new(1, config.learning_rate);
    let mut log_g2 = [libm::log(model.gamma2)];

    let mut order: Vec<usize> = (0..count).collect();
    let mut batch_buf = Vec::with_capacity(config.batch_size * data_dim);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            batch_buf.clear();
            for &i in chunk {
                batch_buf.extend_from_slice(&images[i * data_dim..(i + 1) * data_dim]);
            }
            let (loss, grads) = model.dvae_loss_and_grads(&batch_buf, chunk.len(), &mut noise_rng)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            total += loss.total * chunk.len() as f64;
            enc_adam.step(model.encoder.params_mut(), &grads.encoder)?;
            dec_adam.step(model.decoder.params_mut(), &grads.decoder)?;
            g2_adam.step(&mut log_g2, &[grads.log_gamma2])?;
            model.gamma2 = libm::exp(log_g2[0]);
        }
        let mean = total / count as f64;
        epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(TrainOutcome { model, epoch_losses })
}
