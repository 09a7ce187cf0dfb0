//! Channel and reward identities checked over random inputs.

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use uavsec_core::channel::{self, ChannelParams};
use uavsec_core::env;
use uavsec_core::WorldConfig;

use super::pos;

pub const TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PhysicsCase {
    pub d: f64,
    pub scale: f64,
    pub zeta: f64,
    pub p: f64,
    pub p_more: f64,
    pub d_more: f64,
    pub per_slot: Vec<(f64, f64)>,
    pub uav: (f64, f64),
    pub ue: (f64, f64),
    pub altitude: f64,
}

pub fn physics_case() -> impl Strategy<Value = PhysicsCase> {
    (
        (0.1f64..1e3, 0.1f64..10.0, 1e-3f64..1e6),
        (0.0f64..5.0, 0.0f64..5.0, 0.0f64..1e3),
        prop::collection::vec((0.0f64..20.0, 0.0f64..20.0), 1..50),
        ((0.0f64..100.0, 0.0f64..100.0), (0.0f64..100.0, 0.0f64..100.0), 0.5f64..100.0),
    )
        .prop_map(|((d, scale, zeta), (p, dp, dd), per_slot, (uav, ue, altitude))| PhysicsCase {
            d,
            scale,
            zeta,
            p,
            p_more: p + dp,
            d_more: d + dd,
            per_slot,
            uav,
            ue,
            altitude,
        })
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= TOL * a.abs().max(b.abs())
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(TestCaseError::fail(format!($($fmt)*)));
        }
    };
}

pub fn check_physics(c: &PhysicsCase) -> Result<(), TestCaseError> {
    let a2g = channel::a2g_gain(c.d, c.zeta).unwrap();
    let a2g_far = channel::a2g_gain(c.scale * c.d, c.zeta).unwrap();
    ensure!(close(a2g_far * c.scale.powi(2), a2g), "a2g scaling: {a2g_far} vs {a2g}");
    ensure!(close(a2g * c.d * c.d, c.zeta), "a2g at d: {a2g}");
    let g2g = channel::g2g_gain(c.d, c.zeta).unwrap();
    let g2g_far = channel::g2g_gain(c.scale * c.d, c.zeta).unwrap();
    ensure!(close(g2g_far * c.scale.powi(4), g2g), "g2g scaling: {g2g_far} vs {g2g}");
    ensure!(close(g2g * c.d.powi(4), c.zeta), "g2g at d: {g2g}");

    let params = ChannelParams::new(c.zeta, c.p_more.max(1.0), (1.0, 1.0)).unwrap();
    let cu = channel::capacity_ue(c.p, c.d, &params).unwrap();
    ensure!(cu >= 0.0, "negative capacity");
    ensure!(channel::capacity_ue(c.p_more, c.d, &params).unwrap() >= cu, "C_u not increasing in power");
    ensure!(channel::capacity_ue(c.p, c.d_more, &params).unwrap() <= cu, "C_u not decreasing in distance");
    let cj = channel::capacity_eve(c.p, c.d, &params).unwrap();
    ensure!(channel::capacity_eve(c.p_more, c.d, &params).unwrap() >= cj, "C_j not increasing in power");
    ensure!(channel::capacity_eve(c.p, c.d_more, &params).unwrap() <= cj, "C_j not decreasing in distance");

    for &(u, j) in &c.per_slot {
        let r = channel::secrecy_rate_per_slot(u, j);
        ensure!(r >= 0.0 && r == (u - j).max(0.0), "per-slot secrecy {r} for ({u}, {j})");
    }
    let total = channel::secrecy_capacity(&c.per_slot).unwrap();
    let mean = c.per_slot.iter().map(|&(u, j)| (u - j).max(0.0)).sum::<f64>() / c.per_slot.len() as f64;
    ensure!(total >= 0.0 && close(total, mean), "secrecy capacity {total} vs {mean}");

    let world = WorldConfig {
        ue_pos: pos(c.ue.0, c.ue.1, 0.0),
        eve_pos: pos(100.0 - c.ue.0, 100.0 - c.ue.1 + 1.0, 0.0),
        uav_start: pos(0.0, 0.0, c.altitude),
        altitude: c.altitude,
        zeta0_over_sigma2: c.zeta,
        ..WorldConfig::default()
    };
    let ch = world.channel().unwrap();
    let uav = pos(c.uav.0, c.uav.1, c.altitude);
    let power = c.p.min(world.p_max);
    let reward = env::reward_at(&world, &ch, &uav, power).unwrap();
    let cap = channel::capacity_ue(power, channel::distance(&uav, &world.ue_pos), &ch).unwrap();
    ensure!(reward >= 0.0, "negative reward");
    ensure!(close((1.0 + reward).log2(), cap), "log2(1 + {reward}) vs C_u {cap}");
    ensure!(close(env::reward_capacity_identity(reward).unwrap(), cap), "identity helper vs C_u");
    Ok(())
}
