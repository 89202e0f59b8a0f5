//! Quantitative functionals and checkers: moments, the potential kernel and
//! Green's function, the energy quadratic form, random-walk statistics, and
//! the closed-form speed/entropy constants for product trees.

mod kernel;
mod rw;

pub use kernel::{potential_kernel, KernelCheckpoint, KernelTable};
pub use rw::{
    exact_exit_time, mc_exit_time, mc_green_decay, mc_speed, GreenDecay, RwStats, ShellStat,
    StatKind,
};
pub(crate) use rw::ols;

use num_rational::BigRational;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::graphs::{Graph, VertexKey};
use crate::mass::{MassDist, MassValue, RunTrace};

fn lattice_coords(v: &VertexKey) -> Result<&[i64]> {
    match v {
        VertexKey::Lattice(c) => Ok(c),
        other => Err(Error::Unsupported(format!(
            "lattice functional applied to vertex {other}"
        ))),
    }
}

/// Second moment M2 = sum mu(v) |v|_2^2 on Z^d.
pub fn second_moment<M: MassValue>(dist: &MassDist<M>) -> Result<f64> {
    let mut acc = 0.0;
    for (v, m) in dist.iter() {
        let c = lattice_coords(v)?;
        acc += m.to_f64() * c.iter().map(|&x| (x * x) as f64).sum::<f64>();
    }
    Ok(acc)
}

/// Exact second moment in rational arithmetic.
pub fn second_moment_exact(dist: &MassDist<BigRational>) -> Result<BigRational> {
    let mut acc = <BigRational as Zero>::zero();
    for (v, m) in dist.iter() {
        let c = lattice_coords(v)?;
        let n2: u64 = c.iter().map(|&x| (x * x) as u64).sum();
        acc += m * BigRational::from_int(n2);
    }
    Ok(acc)
}

/// Change in M2 caused by toppling mass m at v, evaluated from the neighbor
/// coordinates (not from the simplified identity, so it can serve as its
/// check).
pub fn m2_increment<M: MassValue>(g: &dyn Graph, v: &VertexKey, m: &M) -> Result<M> {
    let nbrs = g.neighbors(v)?;
    let deg = nbrs.len() as u64;
    let share = m.div_int(deg);
    let norm2 = |v: &VertexKey| -> Result<u64> {
        Ok(lattice_coords(v)?.iter().map(|&x| (x * x) as u64).sum())
    };
    let mut acc = M::zero();
    for u in &nbrs {
        acc.add_assign(&share.mul(&M::from_int(norm2(u)?)));
    }
    Ok(acc.sub(&m.mul(&M::from_int(norm2(v)?))))
}

/// Average level M1 = sum mu(v) level(v) on a rooted tree family.
pub fn avg_level<M: MassValue>(g: &dyn Graph, dist: &MassDist<M>) -> Result<f64> {
    if !matches!(g.family_name(), "dary" | "regtree" | "gw") {
        return Err(Error::Unsupported(format!(
            "avg_level requires a rooted tree family, got {}",
            g.family_name()
        )));
    }
    let mut acc = 0.0;
    for (v, m) in dist.iter() {
        acc += m.to_f64() * g.distance(v)? as f64;
    }
    Ok(acc)
}

/// Finds a vertex at level <= l carrying mass >= d^-(l+1)/4. Such a vertex
/// exists whenever M1[dist] <= l; absence when M1 > l is not an error.
pub fn find_large_mass<M: MassValue>(
    g: &dyn Graph,
    dist: &MassDist<M>,
    l: u64,
    d: u32,
) -> Result<Option<VertexKey>> {
    let bound = (d as f64).powi(-(l as i32 + 1)) / 4.0;
    for (v, m) in dist.iter() {
        if g.distance(v)? <= l && m.to_f64() >= bound {
            return Ok(Some(v.clone()));
        }
    }
    Ok(None)
}

/// Energy E_a[mu] = sum a(x-y) mu(x) mu(y) through a kernel table.
pub fn energy(dist: &MassDist<f64>, kernel: &KernelTable) -> Result<f64> {
    let support: Vec<(Vec<i64>, f64)> = dist
        .iter()
        .map(|(v, m)| Ok((lattice_coords(v)?.to_vec(), *m)))
        .collect::<Result<_>>()?;
    let mut acc = 0.0;
    for (i, (x, mx)) in support.iter().enumerate() {
        for (y, my) in support.iter().skip(i + 1) {
            let diff: Vec<i64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            acc += 2.0 * kernel.a(&diff)? * mx * my;
        }
        // a(0) = 0, so diagonal terms vanish; kept explicit for clarity.
    }
    Ok(acc)
}

/// Exact energy on Z^1, where the potential kernel is a(x) = |x|.
pub fn energy_d1_exact(dist: &MassDist<BigRational>) -> Result<BigRational> {
    let support: Vec<(i64, BigRational)> = dist
        .iter()
        .map(|(v, m)| {
            let c = lattice_coords(v)?;
            if c.len() != 1 {
                return Err(Error::Unsupported("energy_d1_exact requires Z^1".into()));
            }
            Ok((c[0], m.clone()))
        })
        .collect::<Result<_>>()?;
    let mut acc = <BigRational as Zero>::zero();
    for (i, (x, mx)) in support.iter().enumerate() {
        for (y, my) in support.iter().skip(i + 1) {
            let a = BigRational::from_int((x - y).unsigned_abs());
            acc += a * mx * my * BigRational::from_int(2);
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone)]
pub struct EnergyM2Report {
    pub steps: u64,
    /// t (E[mu_t] - E[mu_0])
    pub lhs: f64,
    /// (M2[mu_t] - M2[mu_0])^2
    pub rhs: f64,
    pub slack: f64,
    pub ok: bool,
}

/// Checks t (E[mu_t] - E[mu_0]) >= (M2[mu_t] - M2[mu_0])^2 by replaying a
/// trace. The allowed slack scales with the kernel's recorded tolerance.
pub fn check_energy_m2(
    g: &dyn Graph,
    initial: &MassDist<f64>,
    trace: &RunTrace<f64>,
    kernel: &KernelTable,
) -> Result<EnergyM2Report> {
    let e0 = energy(initial, kernel)?;
    let m2_0 = second_moment(initial)?;
    let mut dist = initial.clone();
    for rec in &trace.records {
        dist.topple(g, &rec.vertex, rec.mass)?;
    }
    let et = energy(&dist, kernel)?;
    let m2_t = second_moment(&dist)?;
    let t = trace.records.len() as f64;
    let lhs = t * (et - e0);
    let rhs = (m2_t - m2_0).powi(2);
    let slack = 4.0 * t * kernel.tol_achieved + 1e-9;
    Ok(EnergyM2Report {
        steps: trace.records.len() as u64,
        lhs,
        rhs,
        slack,
        ok: lhs >= rhs - slack,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ClosedForms {
    /// Random-walk speed on T_d x T_k.
    pub speed: f64,
    /// Avez entropy.
    pub entropy: f64,
    /// Growth base theta(d,k) of the N_p lower bound.
    pub theta: f64,
}

/// Closed forms for the product tree T_d x T_k, together with a numeric
/// check of the identity exp(h / speed) = theta.
pub fn closed_forms(d: u32, k: u32) -> Result<ClosedForms> {
    if !(d >= k && k >= 1 && d + k >= 3) {
        return Err(Error::Parameter(
            "closed forms need d >= k >= 1 and d + k >= 3".into(),
        ));
    }
    let (df, kf) = (d as f64, k as f64);
    let speed = (df + kf - 2.0) / (df + kf + 2.0);
    let entropy = ((df - 1.0) * df.ln() + (kf - 1.0) * kf.ln()) / (df + kf + 2.0);
    let theta = df.powf((df - 1.0) / (df + kf - 2.0)) * kf.powf((kf - 1.0) / (df + kf - 2.0));
    let check = (entropy / speed).exp();
    if (check - theta).abs() > 1e-12 * theta.max(1.0) {
        return Err(Error::Invariant(format!(
            "exp(h/l) = {check} differs from theta = {theta} for (d,k)=({d},{k})"
        )));
    }
    Ok(ClosedForms {
        speed,
        entropy,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::GraphFamily;
    use num_bigint::BigInt;

    fn line() -> std::sync::Arc<dyn Graph> {
        GraphFamily::Lattice { d: 1 }.build().unwrap()
    }

    #[test]
    fn second_moment_examples() {
        let g = line();
        let delta = MassDist::<f64>::delta(g.origin());
        assert_eq!(second_moment(&delta).unwrap(), 0.0);
        let pm = MassDist::<f64>::from_entries([
            (VertexKey::Lattice(vec![-1]), 0.5),
            (VertexKey::Lattice(vec![1]), 0.5),
        ]);
        assert_eq!(second_moment(&pm).unwrap(), 1.0);
        let comb = MassDist::<f64>::from_entries([(VertexKey::Comb(0, 1), 1.0)]);
        assert!(second_moment(&comb).is_err());
    }

    #[test]
    fn m2_increment_equals_toppled_mass() {
        let g = GraphFamily::Lattice { d: 2 }.build().unwrap();
        let m = BigRational::new(BigInt::from(3), BigInt::from(8));
        let inc = m2_increment(&*g, &VertexKey::Lattice(vec![2, -1]), &m).unwrap();
        assert_eq!(inc, m);
    }

    #[test]
    fn avg_level_and_large_mass() {
        let g = GraphFamily::Dary { d: 2 }.build().unwrap();
        let delta = MassDist::<f64>::delta(g.origin());
        assert_eq!(avg_level(&*g, &delta).unwrap(), 0.0);
        assert_eq!(
            find_large_mass(&*g, &delta, 0, 2).unwrap(),
            Some(g.origin())
        );
        let level2 = MassDist::<f64>::from_entries(
            [[0u32, 0], [0, 1], [1, 0], [1, 1]]
                .iter()
                .map(|p| (VertexKey::Tree(p.to_vec()), 0.25)),
        );
        assert_eq!(avg_level(&*g, &level2).unwrap(), 2.0);
    }

    #[test]
    fn exact_energy_on_split_mass() {
        let g = line();
        let mut dist = MassDist::<num_rational::BigRational>::delta(g.origin());
        dist.full_topple(&*g, &g.origin()).unwrap();
        // {-1: 1/2, +1: 1/2}: the only cross pair has a(2) = 2.
        assert_eq!(energy_d1_exact(&dist).unwrap(), BigRational::from_int(1));
    }

    #[test]
    fn closed_form_values() {
        let c = closed_forms(2, 2).unwrap();
        assert!((c.speed - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.theta - 2.0).abs() < 1e-12);
        let c = closed_forms(3, 1).unwrap();
        assert!((c.speed - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.entropy - 3f64.ln() / 3.0).abs() < 1e-15);
        assert!((c.theta - 3.0).abs() < 1e-12);
        assert!(closed_forms(1, 1).is_err());
        assert!(closed_forms(2, 3).is_err());
    }

    #[test]
    fn identity_holds_on_grid() {
        for d in 1..=6u32 {
            for k in 1..=d {
                if d + k < 3 {
                    continue;
                }
                closed_forms(d, k).unwrap();
            }
        }
    }
}
