//! Pure per-stage operations of the distillation step: clean-latent
//! prediction, student→teacher alignment, teacher timestep sampling,
//! forward perturbation and two-scale guidance.

use ndarray::{Array2, Zip};
use statrs::distribution::{ContinuousCDF, Normal};

use super::model::Parameterization;
use super::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::{check_same_shape, Latent, LatentBatch, LatentShape, LatentSpace};

const MIN_ALPHA: f64 = 1e-8;

/// Single-step clean estimate from a network prediction.
///
/// Epsilon: `x0 = (z - sigma·eps) / alpha`.
/// Velocity (`v = alpha·eps - sigma·x0`): `x0 = (alpha·z - sigma·v) / (alpha² + sigma²)`.
pub fn tweedie_clean_estimate<S: NoiseSchedule + ?Sized>(
    latents: &LatentBatch,
    prediction: &[Latent],
    schedule: &S,
    tau: f64,
    parameterization: Parameterization,
) -> Result<LatentBatch> {
    if (latents.timestep() - tau).abs() > 1e-12 {
        return Err(Error::TimestepMismatch {
            expected: tau,
            got: latents.timestep(),
        });
    }
    check_same_shape(latents.latents(), prediction, "tweedie")?;
    let alpha = schedule.alpha(tau);
    let sigma = schedule.sigma(tau);
    let out = match parameterization {
        Parameterization::Epsilon => {
            if alpha < MIN_ALPHA {
                return Err(Error::DegenerateAlpha { t: tau, alpha });
            }
            latents
                .latents()
                .iter()
                .zip(prediction)
                .map(|(z, eps)| Zip::from(z).and(eps).map_collect(|&z, &e| (z - sigma * e) / alpha))
                .collect()
        }
        Parameterization::V => {
            let norm = alpha * alpha + sigma * sigma;
            latents
                .latents()
                .iter()
                .zip(prediction)
                .map(|(z, v)| Zip::from(z).and(v).map_collect(|&z, &v| (alpha * z - sigma * v) / norm))
                .collect()
        }
    };
    LatentBatch::new(out, 0.0, latents.space())
}

/// `∂x0/∂prediction` of [`tweedie_clean_estimate`] (a scalar, since the
/// map is affine and elementwise).
pub fn tweedie_prediction_jacobian<S: NoiseSchedule + ?Sized>(
    schedule: &S,
    tau: f64,
    parameterization: Parameterization,
) -> Result<f64> {
    let alpha = schedule.alpha(tau);
    let sigma = schedule.sigma(tau);
    match parameterization {
        Parameterization::Epsilon if alpha < MIN_ALPHA => Err(Error::DegenerateAlpha { t: tau, alpha }),
        Parameterization::Epsilon => Ok(-sigma / alpha),
        Parameterization::V => Ok(-sigma / (alpha * alpha + sigma * sigma)),
    }
}

/// Corner-aligned 1-D linear interpolation matrix `(out × in)`.
fn interpolation_matrix(n_in: usize, n_out: usize) -> Array2<f64> {
    let mut m = Array2::zeros((n_out, n_in));
    for o in 0..n_out {
        let pos = if n_out == 1 || n_in == 1 {
            0.0
        } else {
            (o * (n_in - 1)) as f64 / (n_out - 1) as f64
        };
        let lo = (pos.floor() as usize).min(n_in - 1);
        let hi = (lo + 1).min(n_in - 1);
        let w = pos - lo as f64;
        m[[o, lo]] += 1.0 - w;
        if w > 0.0 {
            m[[o, hi]] += w;
        }
    }
    m
}

/// Bilinear resize of every channel to `(height, width)`, corners aligned.
pub fn bilinear_resize(latent: &Latent, height: usize, width: usize) -> Latent {
    let (c, h, w) = latent.dim();
    if (h, w) == (height, width) {
        return latent.clone();
    }
    let rows = interpolation_matrix(h, height);
    let cols = interpolation_matrix(w, width);
    let mut out = Latent::zeros((c, height, width));
    for ch in 0..c {
        let plane = rows.dot(&latent.index_axis(ndarray::Axis(0), ch)).dot(&cols.t());
        out.index_axis_mut(ndarray::Axis(0), ch).assign(&plane);
    }
    out
}

/// Transpose of [`bilinear_resize`]: maps a cotangent at the output
/// resolution back to the input resolution.
pub fn bilinear_resize_adjoint(cotangent: &Latent, in_height: usize, in_width: usize) -> Latent {
    let (c, h, w) = cotangent.dim();
    if (h, w) == (in_height, in_width) {
        return cotangent.clone();
    }
    let rows = interpolation_matrix(in_height, h);
    let cols = interpolation_matrix(in_width, w);
    let mut out = Latent::zeros((c, in_height, in_width));
    for ch in 0..c {
        let plane = rows.t().dot(&cotangent.index_axis(ndarray::Axis(0), ch)).dot(&cols);
        out.index_axis_mut(ndarray::Axis(0), ch).assign(&plane);
    }
    out
}

/// Resize clean student latents to the teacher's latent resolution.
pub fn align_student_to_teacher(batch: &LatentBatch, target: LatentShape) -> Result<LatentBatch> {
    if batch.timestep() != 0.0 {
        return Err(Error::TimestepMismatch {
            expected: 0.0,
            got: batch.timestep(),
        });
    }
    if let Some(shape) = batch.shape() {
        if shape.channels != target.channels {
            return Err(Error::ChannelMismatch {
                student: shape.channels,
                teacher: target.channels,
            });
        }
    }
    let out = batch
        .latents()
        .iter()
        .map(|l| bilinear_resize(l, target.height, target.width))
        .collect();
    LatentBatch::new(out, 0.0, LatentSpace::Teacher)
}

/// Teacher timestep from `TruncNorm(mean = b, std = (b - tau)/f)` truncated
/// to `[tau, b]`, by inverse CDF on a single uniform draw. When `tau >= b`
/// the support is empty and `b` is returned.
///
/// In standardized units the interval is always `[-f, 0]`.
pub fn sample_teacher_timestep(tau: f64, f: f64, b: f64, rng: &mut Rng) -> f64 {
    assert!(f > 0.0, "skew f must be positive");
    // keep stream consumption constant, degenerate or not
    let u = rng.uniform();
    if tau >= b {
        log::debug!("teacher timestep support [{tau}, {b}] is empty; using t = {b}");
        return b;
    }
    let normal = Normal::standard();
    let scale = (b - tau) / f;
    let p_lo = normal.cdf(-f);
    let p = p_lo + u * (0.5 - p_lo);
    let z = normal.inverse_cdf(p);
    (b + scale * z).clamp(tau, b)
}

/// Forward-diffuse clean teacher latents to time `t`. Returns the noisy
/// batch and the noise used.
pub fn perturb<S: NoiseSchedule + ?Sized>(
    clean: &LatentBatch,
    t: f64,
    schedule: &S,
    rng: &mut Rng,
) -> Result<(LatentBatch, Vec<Latent>)> {
    if clean.timestep() != 0.0 {
        return Err(Error::TimestepMismatch {
            expected: 0.0,
            got: clean.timestep(),
        });
    }
    let alpha = schedule.alpha(t);
    let sigma = schedule.sigma(t);
    let mut noise = Vec::with_capacity(clean.len());
    let mut noisy = Vec::with_capacity(clean.len());
    for z0 in clean.latents() {
        let eps = rng.normal_array(z0.dim(), 1.0);
        noisy.push(Zip::from(z0).and(&eps).map_collect(|&x, &e| alpha * x + sigma * e));
        noise.push(eps);
    }
    Ok((LatentBatch::new(noisy, t, clean.space())?, noise))
}

/// Two-scale classifier-free guidance:
/// `uncond + s_I·(img - uncond) + s_T·(full - img)`.
///
/// Evaluated as `full + (s_T - 1)·(full - img) + (s_I - 1)·(img - uncond)`,
/// which is exact for unit scales and for equal inputs.
pub fn cfg_compose(
    eps_uncond: &[Latent],
    eps_img: &[Latent],
    eps_full: &[Latent],
    text_scale: f64,
    image_scale: f64,
) -> Result<Vec<Latent>> {
    check_same_shape(eps_uncond, eps_img, "cfg")?;
    check_same_shape(eps_uncond, eps_full, "cfg")?;
    Ok(eps_uncond
        .iter()
        .zip(eps_img)
        .zip(eps_full)
        .map(|((u, i), f)| {
            Zip::from(u)
                .and(i)
                .and(f)
                .map_collect(|&u, &i, &f| f + (text_scale - 1.0) * (f - i) + (image_scale - 1.0) * (i - u))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::schedule::VpLinearSchedule;
    use ndarray::array;

    fn batch(data: Vec<Latent>, t: f64) -> LatentBatch {
        LatentBatch::new(data, t, LatentSpace::Student).unwrap()
    }

    /// Reference bilinear: explicit weighted average of the four neighbours.
    fn bilinear_oracle(src: &Array2<f64>, oh: usize, ow: usize) -> Array2<f64> {
        let (h, w) = src.dim();
        Array2::from_shape_fn((oh, ow), |(y, x)| {
            let sy = y as f64 * (h - 1) as f64 / (oh - 1) as f64;
            let sx = x as f64 * (w - 1) as f64 / (ow - 1) as f64;
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
            src[[y0, x0]] * (1.0 - fy) * (1.0 - fx)
                + src[[y0, x1]] * (1.0 - fy) * fx
                + src[[y1, x0]] * fy * (1.0 - fx)
                + src[[y1, x1]] * fy * fx
        })
    }

    #[test]
    fn tweedie_identity_case() {
        struct Ve;
        impl NoiseSchedule for Ve {
            fn alpha(&self, _: f64) -> f64 {
                1.0
            }
            fn sigma(&self, t: f64) -> f64 {
                10.0 * t
            }
        }
        let z = Latent::from_shape_fn((1, 2, 3), |(_, y, x)| (y * 3 + x) as f64);
        let out = tweedie_clean_estimate(&batch(vec![z.clone()], 0.4), &[Latent::zeros((1, 2, 3))], &Ve, 0.4, Parameterization::Epsilon).unwrap();
        assert_eq!(out.latents()[0], z);
        assert_eq!(out.timestep(), 0.0);
    }

    #[test]
    fn tweedie_inverts_forward_for_both_parameterizations() {
        let s = VpLinearSchedule::default();
        let tau = 0.7;
        let (a, sg) = (s.alpha(tau), s.sigma(tau));
        let x0 = Latent::from_shape_fn((2, 2, 2), |(c, y, x)| c as f64 - 0.3 * y as f64 + 0.7 * x as f64);
        let eps = Latent::from_shape_fn((2, 2, 2), |(c, y, x)| ((c + 2 * y + 3 * x) as f64).sin());
        let z = &x0 * a + &eps * sg;
        let est = tweedie_clean_estimate(&batch(vec![z.clone()], tau), std::slice::from_ref(&eps), &s, tau, Parameterization::Epsilon).unwrap();
        for (p, q) in est.latents()[0].iter().zip(x0.iter()) {
            assert!((p - q).abs() < 1e-10);
        }
        let v = &eps * a - &x0 * sg;
        let est = tweedie_clean_estimate(&batch(vec![z], tau), &[v], &s, tau, Parameterization::V).unwrap();
        for (p, q) in est.latents()[0].iter().zip(x0.iter()) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn tweedie_rejects_degenerate_alpha_and_wrong_timestep() {
        struct Dead;
        impl NoiseSchedule for Dead {
            fn alpha(&self, _: f64) -> f64 {
                1e-9
            }
            fn sigma(&self, _: f64) -> f64 {
                1.0
            }
        }
        let z = Latent::zeros((1, 1, 1));
        let err = tweedie_clean_estimate(&batch(vec![z.clone()], 1.0), std::slice::from_ref(&z), &Dead, 1.0, Parameterization::Epsilon).unwrap_err();
        assert_eq!(err.kind(), "degenerate-alpha");
        let err = tweedie_clean_estimate(&batch(vec![z.clone()], 0.5), &[z], &Dead, 1.0, Parameterization::V).unwrap_err();
        assert_eq!(err.kind(), "timestep-mismatch");
    }

    #[test]
    fn resize_identity_and_constants() {
        let x = Latent::from_shape_fn((4, 3, 5), |(c, y, x)| (c * 100 + y * 10 + x) as f64 * 0.37);
        let out = align_student_to_teacher(&batch(vec![x.clone()], 0.0), LatentShape::new(4, 3, 5)).unwrap();
        assert_eq!(out.latents()[0], x);
        assert_eq!(out.space(), LatentSpace::Teacher);

        let c = Latent::from_elem((1, 3, 3), 0.5);
        let up = bilinear_resize(&c, 6, 6);
        assert!(up.iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn resize_matches_oracle_2x2_to_4x4() {
        let src = array![[0.0, 1.0], [2.0, 3.0]];
        let lat = src.clone().into_shape_with_order((1, 2, 2)).unwrap();
        let out = bilinear_resize(&lat, 4, 4);
        let expect = bilinear_oracle(&src, 4, 4);
        for y in 0..4 {
            for x in 0..4 {
                assert!((out[[0, y, x]] - expect[[y, x]]).abs() < 1e-6);
            }
        }
        // corners are preserved under corner alignment
        assert_eq!(out[[0, 0, 0]], 0.0);
        assert_eq!(out[[0, 3, 3]], 3.0);
        assert!((out[[0, 0, 1]] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn resize_adjoint_is_transpose() {
        let x = Latent::from_shape_fn((2, 3, 2), |(c, y, x)| ((c * 7 + y * 3 + x) as f64).cos());
        let g = Latent::from_shape_fn((2, 5, 4), |(c, y, x)| ((c * 11 + y * 5 + x) as f64).sin());
        let lhs = crate::types::inner(&bilinear_resize(&x, 5, 4), &g);
        let rhs = crate::types::inner(&x, &bilinear_resize_adjoint(&g, 3, 2));
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn align_rejects_channel_mismatch() {
        let x = Latent::zeros((3, 2, 2));
        let err = align_student_to_teacher(&batch(vec![x], 0.0), LatentShape::new(4, 4, 4)).unwrap_err();
        assert_eq!(err.kind(), "channel-mismatch");
    }

    #[test]
    fn timestep_degenerate_support() {
        let mut rng = Rng::new(1, "t");
        assert_eq!(sample_teacher_timestep(0.95, 0.5, 0.95, &mut rng), 0.95);
        assert_eq!(sample_teacher_timestep(1.0, 0.5, 0.95, &mut rng), 0.95);
    }

    #[test]
    fn timestep_large_f_concentrates_near_b() {
        let mut rng = Rng::new(2, "t");
        let mean: f64 = (0..2000).map(|_| sample_teacher_timestep(0.0, 8.0, 0.95, &mut rng)).sum::<f64>() / 2000.0;
        assert!(mean > 0.85, "mean {mean}");
    }

    #[test]
    fn perturb_at_zero_is_identity() {
        let s = VpLinearSchedule::default();
        let clean = LatentBatch::new(vec![Latent::from_elem((1, 2, 2), 0.25)], 0.0, LatentSpace::Teacher).unwrap();
        let (noisy, noise) = perturb(&clean, 0.0, &s, &mut Rng::new(3, "p")).unwrap();
        assert_eq!(noisy.latents(), clean.latents());
        assert_eq!(noise.len(), 1);
        let (a, na) = perturb(&clean, 0.4, &s, &mut Rng::new(3, "p")).unwrap();
        let (b, nb) = perturb(&clean, 0.4, &s, &mut Rng::new(3, "p")).unwrap();
        assert_eq!(a, b);
        assert_eq!(na, nb);
    }

    #[test]
    fn cfg_unit_scales_return_full() {
        let u = vec![Latent::from_elem((1, 1, 2), 0.1)];
        let i = vec![Latent::from_elem((1, 1, 2), -0.4)];
        let f = vec![Latent::from_elem((1, 1, 2), 2.5)];
        assert_eq!(cfg_compose(&u, &i, &f, 1.0, 1.0).unwrap(), f);
        let same = cfg_compose(&u, &u, &u, 7.5, 1.5).unwrap();
        assert_eq!(same, u);
        assert!(cfg_compose(&u, &i, &[], 1.0, 1.0).is_err());
    }
}
