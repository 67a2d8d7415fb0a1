use serde::{Deserialize, Serialize};

use super::{axle_loads, VehicleError, VehicleParams, TIRE_MU};

/// Magic Formula coefficients for one axle, shift factors omitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxleTireParams {
    /// Stiffness factor.
    #[serde(rename = "B")]
    pub b: f64,
    /// Shape factor.
    #[serde(rename = "C")]
    pub c: f64,
    /// Peak factor (friction is folded in here).
    #[serde(rename = "D")]
    pub d: f64,
    /// Curvature factor.
    #[serde(rename = "E")]
    pub e: f64,
}

impl AxleTireParams {
    pub const C_MAX: f64 = 1.5;
    pub const E_MAX: f64 = 1.1;

    pub const fn new(b: f64, c: f64, d: f64, e: f64) -> Self {
        Self { b, c, d, e }
    }

    /// Default front axle of the bundled vehicle.
    pub const fn default_front() -> Self {
        Self::new(5.5, 1.45, 1.30, 0.0)
    }

    /// Default rear axle of the bundled vehicle. Stiffer than the front at
    /// small slip (the car understeers) but with a lower peak, so at the
    /// friction limit the rear lets go first and the car spins.
    pub const fn default_rear() -> Self {
        Self::new(18.0, 1.1, 1.10, -1.0)
    }

    pub fn validate(&self) -> Result<(), VehicleError> {
        let check = |name, value: f64, ok: bool, reason| {
            if value.is_finite() && ok {
                Ok(())
            } else {
                Err(VehicleError::InvalidParam {
                    name,
                    value,
                    reason,
                })
            }
        };
        check("B", self.b, self.b > 0.0, "must be > 0")?;
        check(
            "C",
            self.c,
            self.c > 0.0 && self.c <= Self::C_MAX,
            "must lie in (0, 1.5]",
        )?;
        check("D", self.d, self.d > 0.0, "must be > 0")?;
        check("E", self.e, self.e <= Self::E_MAX, "must be <= 1.1")?;
        Ok(())
    }

    /// Slope of the normalized curve at zero slip, `B C D`.
    pub fn normalized_stiffness(&self) -> f64 {
        self.b * self.c * self.d
    }
}

/// Magic Formula lateral force.
///
/// `F = mu * Fz * D * sin(C * atan(B a - E (B a - atan(B a))))`.
/// Positive slip gives positive output; callers that need the restoring
/// force on the chassis negate it (see [`TireModel::axle_force`]).
pub fn pacejka_force(alpha: f64, fz: f64, mu: f64, p: &AxleTireParams) -> f64 {
    let ba = p.b * alpha;
    let inner = ba - p.e * (ba - ba.atan());
    mu * fz * p.d * (p.c * inner.atan()).sin()
}

/// Linear tire: restoring force `-k * alpha`.
pub fn linear_force(alpha: f64, stiffness: f64) -> f64 {
    -stiffness * alpha
}

/// Which lateral force law the plant (or a lookup table) uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TireModel {
    Pacejka {
        front: AxleTireParams,
        rear: AxleTireParams,
    },
    /// Cornering stiffness per axle in N/rad.
    Linear { front: f64, rear: f64 },
}

impl Default for TireModel {
    fn default() -> Self {
        TireModel::Pacejka {
            front: AxleTireParams::default_front(),
            rear: AxleTireParams::default_rear(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axle {
    Front,
    Rear,
}

impl TireModel {
    pub fn validate(&self) -> Result<(), VehicleError> {
        match self {
            TireModel::Pacejka { front, rear } => {
                front.validate()?;
                rear.validate()
            }
            TireModel::Linear { front, rear } => {
                for (name, k) in [("linear.front", *front), ("linear.rear", *rear)] {
                    if !(k.is_finite() && k > 0.0) {
                        return Err(VehicleError::InvalidParam {
                            name,
                            value: k,
                            reason: "cornering stiffness must be > 0",
                        });
                    }
                }
                Ok(())
            }
        }
    }

    /// Lateral force the axle exerts on the chassis (restoring sign: a
    /// negative slip angle pushes to the left).
    #[inline]
    pub fn axle_force(&self, axle: Axle, alpha: f64, fz: f64) -> f64 {
        match (self, axle) {
            (TireModel::Pacejka { front, .. }, Axle::Front) => {
                -pacejka_force(alpha, fz, TIRE_MU, front)
            }
            (TireModel::Pacejka { rear, .. }, Axle::Rear) => {
                -pacejka_force(alpha, fz, TIRE_MU, rear)
            }
            (TireModel::Linear { front, .. }, Axle::Front) => linear_force(alpha, *front),
            (TireModel::Linear { rear, .. }, Axle::Rear) => linear_force(alpha, *rear),
        }
    }

    /// Linear tires with the same zero-slip cornering stiffness under static
    /// axle loads.
    pub fn linearized(&self, params: &VehicleParams) -> TireModel {
        match self {
            TireModel::Linear { .. } => *self,
            TireModel::Pacejka { front, rear } => {
                let loads = axle_loads(0.0, params);
                TireModel::Linear {
                    front: TIRE_MU * loads.front * front.normalized_stiffness(),
                    rear: TIRE_MU * loads.rear * rear.normalized_stiffness(),
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TireModel::Pacejka { .. } => "pacejka",
            TireModel::Linear { .. } => "linear",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EX: AxleTireParams = AxleTireParams::new(5.0, 1.2, 1.0, 0.8);

    /// Second evaluator written out step by step, independent of the
    /// one-liner above.
    fn magic_formula_reference(alpha: f64, fz: f64, p: &AxleTireParams) -> f64 {
        let x = p.b * alpha;
        let correction = x - x.atan();
        let phi = x - p.e * correction;
        let theta = p.c * phi.atan();
        fz * p.d * theta.sin()
    }

    #[test]
    fn zero_slip_zero_force() {
        assert_eq!(pacejka_force(0.0, 10.0, 1.0, &EX), 0.0);
        assert_eq!(linear_force(0.0, 60.0), 0.0);
    }

    #[test]
    fn pacejka_reference_value() {
        let f = pacejka_force(0.05, 10.0, 1.0, &EX);
        assert!((f - 2.854).abs() < 5e-4, "{f}");
        assert!((f - magic_formula_reference(0.05, 10.0, &EX)).abs() < 1e-12);
    }

    #[test]
    fn linear_reference_value() {
        assert!((linear_force(0.05, 60.0) + 3.0).abs() < 1e-12);
    }

    #[test]
    fn pacejka_bounded_on_sweep() {
        let fz = 10.0;
        for i in 0..=2000 {
            let a = -0.5 + i as f64 * 0.0005;
            assert!(pacejka_force(a, fz, 1.0, &EX).abs() <= fz * EX.d + 1e-12);
        }
    }

    #[test]
    fn cornering_stiffness_matches_bcd() {
        let fz = 17.0;
        let h = 1e-6;
        for p in [EX, AxleTireParams::default_front(), AxleTireParams::default_rear()] {
            let slope = (pacejka_force(h, fz, 1.0, &p) - pacejka_force(-h, fz, 1.0, &p)) / (2.0 * h);
            let expect = fz * p.normalized_stiffness();
            assert!(((slope - expect) / expect).abs() < 1e-6, "{slope} vs {expect}");
        }
    }

    #[test]
    fn linear_matches_axle_force_at_small_slip() {
        let fz = 10.0;
        let k = 1.0 * fz * EX.normalized_stiffness();
        let model = TireModel::Pacejka { front: EX, rear: EX };
        for i in 1..=20 {
            let a = i as f64 * 0.001;
            for alpha in [a, -a] {
                let lin = linear_force(alpha, k);
                let mf = model.axle_force(Axle::Front, alpha, fz);
                assert!(((lin - mf) / mf).abs() < 0.05, "alpha {alpha}: {lin} vs {mf}");
            }
        }
    }

    #[test]
    fn validation_bounds() {
        assert!(AxleTireParams::new(1.0, 1.6, 1.0, 0.0).validate().is_err());
        assert!(AxleTireParams::new(1.0, 1.5, 1.0, 1.2).validate().is_err());
        assert!(AxleTireParams::new(0.0, 1.0, 1.0, 0.0).validate().is_err());
        assert!(AxleTireParams::new(1.0, 1.5, 1.0, 1.1).validate().is_ok());
        assert!(TireModel::Linear { front: 0.0, rear: 1.0 }.validate().is_err());
    }

    #[test]
    fn tire_model_json_shape() {
        let m = TireModel::Linear { front: 200.0, rear: 300.0 };
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"type":"linear","front":200.0,"rear":300.0}"#);
        let p: TireModel =
            serde_json::from_str(r#"{"type":"pacejka","front":{"B":5,"C":1.2,"D":1,"E":0.8},"rear":{"B":5,"C":1.2,"D":1,"E":0.8}}"#)
                .unwrap();
        assert_eq!(p, TireModel::Pacejka { front: EX, rear: EX });
    }

    proptest! {
        #[test]
        fn pacejka_is_odd(alpha in -1.5f64..1.5, b in 0.5f64..30.0, c in 0.1f64..1.5, e in -3.0f64..1.1) {
            let p = AxleTireParams::new(b, c, 1.3, e);
            let f = pacejka_force(alpha, 15.0, 1.0, &p);
            prop_assert_eq!(pacejka_force(-alpha, 15.0, 1.0, &p), -f);
            prop_assert!(f.abs() <= 15.0 * 1.3 + 1e-12);
        }
    }

    #[test]
    fn linearized_matches_small_slip_force() {
        let p = VehicleParams::default();
        let t = TireModel::default();
        let TireModel::Linear { front, rear } = t.linearized(&p) else { panic!() };
        let loads = axle_loads(0.0, &p);
        let a = 1e-6;
        let fd_f = -(t.axle_force(Axle::Front, a, loads.front) - t.axle_force(Axle::Front, -a, loads.front)) / (2.0 * a);
        let fd_r = -(t.axle_force(Axle::Rear, a, loads.rear) - t.axle_force(Axle::Rear, -a, loads.rear)) / (2.0 * a);
        assert!((front - fd_f).abs() < 1e-6 * front);
        assert!((rear - fd_r).abs() < 1e-6 * rear);
    }
}
