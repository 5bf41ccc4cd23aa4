//! Effective channels for a batch of scenarios on an autodiff tape.
//!
//! Positions enter as a `[B, N, M]` variable; everything that does not depend
//! on them (user drops, fading draws, RIS–user links) is precomputed once in
//! [`BatchGeometry`] and enters the tape as constants.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::autodiff::{Tape, Var};
use crate::channel::ris_user_channel;
use crate::error::{Error, Result};
use crate::scenario::{waveguide_ys, Scenario, SystemParams};

/// Position-independent data for a batch of scenarios sharing one `K`.
#[derive(Debug, Clone)]
pub struct BatchGeometry {
    pub batch: usize,
    pub n_users: usize,
    pub n_waveguides: usize,
    pub n_pas: usize,
    pub n_ris: usize,
    /// `[B, K, 1, 1]` user x-coordinates.
    user_x: Vec<f64>,
    /// `[B, K, N, 1]` squared y and z offsets between user and waveguide.
    direct_offset: Vec<f64>,
    /// `[N, 1]` squared y and z offsets between waveguide and RIS.
    ris_offset: Vec<f64>,
    /// `[B, N, M, L]` NLoS draws already scaled by the NLoS weight.
    nlos: Vec<C64>,
    /// `[B, K, L]` conjugated RIS–user links.
    h_conj: Vec<C64>,
    /// `[B, K, 3]` raw user positions.
    pub users: Vec<f64>,
}

impl BatchGeometry {
    pub fn new(scenarios: &[&Scenario], params: &SystemParams) -> Result<Self> {
        let b = scenarios.len();
        if b == 0 {
            return Err(Error::Dimension("empty batch".into()));
        }
        let k = scenarios[0].n_users();
        let (n, m, l) = (params.n_waveguides, params.n_pas_per_wg, params.n_ris);
        let ys = waveguide_ys(params);
        let h = params.height;
        let r = params.ris_position;
        let w_nlos = params.derived().nlos_weight;
        let mut user_x = Vec::with_capacity(b * k);
        let mut users = Vec::with_capacity(b * k * 3);
        let mut direct_offset = Vec::with_capacity(b * k * n);
        let mut nlos = Vec::with_capacity(b * n * m * l);
        let mut h_conj = Vec::with_capacity(b * k * l);
        for s in scenarios {
            if s.n_users() != k {
                return Err(Error::Dimension("all scenarios in a batch need the same K".into()));
            }
            let p = params.clone().with_users(k);
            s.validate(&p)?;
            for u in &s.user_positions {
                user_x.push(u[0]);
                users.extend_from_slice(u);
                for &y in &ys {
                    direct_offset.push((u[1] - y).powi(2) + (h - u[2]).powi(2));
                }
            }
            for draw in &s.nlos_pa_ris {
                nlos.extend(draw[..l].iter().map(|z| z * w_nlos));
            }
            if l > 0 {
                for hk in ris_user_channel(s, &p)? {
                    h_conj.extend(hk.iter().map(|z| z.conj()));
                }
            }
        }
        let ris_offset = ys.iter().map(|&y| (y - r[1]).powi(2) + (h - r[2]).powi(2)).collect();
        Ok(Self {
            batch: b,
            n_users: k,
            n_waveguides: n,
            n_pas: m,
            n_ris: l,
            user_x,
            direct_offset,
            ris_offset,
            nlos,
            h_conj,
            users,
        })
    }

    /// `[B, K, 3]` user positions as a real constant.
    pub fn users_var<'t>(&self, tape: &'t Tape) -> Var<'t> {
        tape.constant_real(&[self.batch, self.n_users, 3], &self.users)
    }
}

/// `[B, N, M, L]` PA–RIS columns for positions `x: [B, N, M]`.
fn pa_ris_columns<'t>(tape: &'t Tape, x: Var<'t>, geo: &BatchGeometry, params: &SystemParams) -> Var<'t> {
    let (b, n, m, l) = (geo.batch, geo.n_waveguides, geo.n_pas, geo.n_ris);
    let dv = params.derived();
    let r = params.ris_position;
    let dx = x.shift_re(-r[0]);
    let offset = tape.constant_real(&[n, 1], &geo.ris_offset);
    let d = dx.abs2().add(offset).sqrt();
    // cos = (x_R − x)/d
    let cos = dx.neg().div(d);
    let amp = d.powf(-params.fading_exponent / 2.0).scale_re(dv.beta0.sqrt());
    let step = -2.0 * PI / params.wavelength * params.element_sep;
    let ramp: Vec<f64> = (0..l).map(|i| step * i as f64).collect();
    let ramp = tape.constant_real(&[l], &ramp);
    let los = cos.reshape(&[b, n, m, 1]).mul(ramp).exp_j().scale_re(dv.los_weight);
    let nlos = tape.constant(&[b, n, m, l], geo.nlos.clone());
    los.add(nlos).mul(amp.reshape(&[b, n, m, 1]))
}

/// Effective channels `[B, K, N]`, row `k` of batch `b` being `ĥ_k^H`.
///
/// `ris` holds the RIS coefficients `e^{jφ_l}` as `[B, L]`; `None` stands for
/// all ones. Systems without a RIS ignore it.
pub fn effective_channels<'t>(
    tape: &'t Tape,
    x: Var<'t>,
    ris: Option<Var<'t>>,
    geo: &BatchGeometry,
    params: &SystemParams,
) -> Var<'t> {
    let (b, k, n, m, l) = (geo.batch, geo.n_users, geo.n_waveguides, geo.n_pas, geo.n_ris);
    assert_eq!(x.shape(), vec![b, n, m], "positions must be [B, N, M]");
    let k0 = 2.0 * PI / params.wavelength;
    let eta_sqrt = params.derived().eta.sqrt();

    let ux = tape.constant_real(&[b, k, 1, 1], &geo.user_x);
    let off = tape.constant_real(&[b, k, n, 1], &geo.direct_offset);
    let d = x.reshape(&[b, 1, n, m]).sub(ux).abs2().add(off).sqrt();
    // conj(√η e^{−jk0 d}/d)
    let mut total = d.scale_re(k0).exp_j().mul(d.recip()).scale_re(eta_sqrt);

    if l > 0 {
        let cols = pa_ris_columns(tape, x, geo, params).reshape(&[b, n * m, l]).transpose();
        let hc = tape.constant(&[b, k, l], geo.h_conj.clone());
        let coef = match ris {
            Some(phi) => hc.mul(phi.reshape(&[b, 1, l])),
            None => hc,
        };
        total = total.add(coef.matmul(cols).reshape(&[b, k, n, m]));
    }
    let g = x.scale_re(-2.0 * PI / params.guided_wavelength).exp_j().reshape(&[b, 1, n, m]);
    total.mul(g).sum(3, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{effective_channel, PaPlacement};
    use crate::objective::RisConfig;
    use crate::scenario::sample_scenario;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn placements(rng: &mut ChaCha8Rng, b: usize, n: usize, m: usize) -> Vec<f64> {
        (0..b)
            .flat_map(|_| {
                let mut v = Vec::new();
                for _ in 0..n {
                    let mut x = rng.random_range(0.0..2.0);
                    for _ in 0..m {
                        v.push(x);
                        x += 0.1 + rng.random_range(0.0..2.0);
                    }
                }
                v
            })
            .collect()
    }

    #[test]
    fn batched_channels_match_plain_evaluation() {
        for (params, with_phase) in [
            (SystemParams::desk_default().with_dims(3, 2, 6, 2), true),
            (SystemParams::desk_default().with_dims(3, 2, 6, 2), false),
            (SystemParams::desk_default().with_dims(2, 3, 0, 2), false),
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let b = 3;
            let scen: Vec<_> = (0..b as u64).map(|s| sample_scenario(&params, s)).collect();
            let refs: Vec<&Scenario> = scen.iter().collect();
            let geo = BatchGeometry::new(&refs, &params).unwrap();
            let (n, m, l) = (params.n_waveguides, params.n_pas_per_wg, params.n_ris);
            let xs = placements(&mut rng, b, n, m);
            let phases: Vec<f64> = (0..b * l).map(|_| rng.random_range(0.0..6.28)).collect();
            let tape = Tape::new();
            let x = tape.constant_real(&[b, n, m], &xs);
            let ris = with_phase.then(|| tape.constant_real(&[b, l], &phases).exp_j());
            let z = effective_channels(&tape, x, ris, &geo, &params);
            let zv = z.value();
            for bi in 0..b {
                let pl = PaPlacement::from_flat(n, m, &xs[bi * n * m..(bi + 1) * n * m]);
                let ph = if with_phase { phases[bi * l..(bi + 1) * l].to_vec() } else { vec![0.0; l] };
                let want = effective_channel(&pl, &RisConfig::new(ph), &scen[bi], &params).unwrap();
                let mut err = 0.0;
                for ki in 0..params.n_users {
                    for ni in 0..n {
                        err += (zv[(bi * params.n_users + ki) * n + ni] - want[(ki, ni)]).norm_sqr();
                    }
                }
                let rel = err.sqrt() / want.norm();
                assert!(rel <= 1e-12, "relative error {rel}");
            }
        }
    }

    #[test]
    fn mixed_user_counts_are_rejected() {
        let p = SystemParams::desk_default();
        let a = sample_scenario(&p, 1);
        let b = sample_scenario(&p.clone().with_users(1), 2);
        assert!(BatchGeometry::new(&[&a, &b], &p).is_err());
    }
}
