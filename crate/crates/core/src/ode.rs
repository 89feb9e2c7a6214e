//! Explicit embedded Runge–Kutta integration (Dormand–Prince 8(5,3)) with PI step control.
//!
//! Systems can restrict the step through [`OdeSystem::max_step`] and veto an accepted
//! step through [`OdeSystem::review_step`]; both are used to keep steps from jumping
//! over narrow features of a potential.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e}); tolerance cannot be met")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("step budget of {steps} exhausted at t = {t}")]
    MaxStepsExceeded { t: f64, steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step review did not settle at t = {t} after {retries} retries")]
    ReviewFailed { t: f64, retries: usize },
}

/// Outcome of [`OdeSystem::review_step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepReview {
    Accept,
    /// Redo the step with `h` multiplied by the given factor in (0, 1).
    Shrink(f64),
}

pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N], dy: &mut [f64; N]);

    /// Upper bound on |h| for a step starting at (t, y) with slope `dy`, moving in
    /// direction `dir` (±1).
    fn max_step(&self, _t: f64, _y: &[f64; N], _dy: &[f64; N], _dir: f64) -> f64 {
        f64::INFINITY
    }

    fn review_step(&self, _t: f64, _y0: &[f64; N], _y1: &[f64; N], _h: f64) -> StepReview {
        StepReview::Accept
    }

    /// May tighten the per-component error scales `sc` (initially atol + rtol·|y|) used to
    /// judge a trial step from `y0` to `y1`.
    fn error_scale(&self, _y0: &[f64; N], _y1: &[f64; N], _rtol: f64, _sc: &mut [f64; N]) {}

    /// Called on each accepted state before the slope is re-evaluated. A system may change
    /// its coordinate representation here, provided `rhs` describes the same point after.
    fn rebase(&self, _t: f64, _y: &mut [f64; N]) {}
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// 0 selects an automatic initial step.
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
    pub safety: f64,
    pub beta: f64,
    pub fac_min: f64,
    pub fac_max: f64,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol,
            ..Default::default()
        }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-10,
            h_init: 0.0,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
            safety: 0.9,
            beta: 0.04,
            fac_min: 0.333,
            fac_max: 6.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub reviewed: usize,
    pub evals: usize,
}

// Dormand & Prince DOP853 coefficients (Hairer, Nørsett & Wanner).
const C: [f64; 12] = [
    0.0,
    0.052_600_151_958_767_731_878_558_754_448_8,
    0.078_900_227_938_151_597_817_838_131_673_2,
    0.118_350_341_907_227_396_726_757_197_51,
    0.281_649_658_092_772_603_273_242_802_49,
    0.333_333_333_333_333_333_333_333_333_333,
    0.25,
    0.307_692_307_692_307_692_307_692_307_692,
    0.651_282_051_282_051_282_051_282_051_282,
    0.6,
    0.857_142_857_142_857_142_857_142_857_142,
    1.0,
];

const A: [&[f64]; 12] = [
    &[],
    &[5.260_015_195_876_773_187_855_875_444_88E-2],
    &[
        1.972_505_698_453_789_945_445_953_291_83E-2,
        5.917_517_095_361_369_836_337_859_875_49E-2,
    ],
    &[
        2.958_758_547_680_684_918_168_929_937_75E-2,
        0.0,
        8.876_275_643_042_054_754_506_789_813_24E-2,
    ],
    &[
        2.413_651_341_592_666_855_023_697_986_65E-1,
        0.0,
        -8.845_494_793_282_860_853_448_649_627_17E-1,
        9.248_340_032_617_920_031_157_379_665_43E-1,
    ],
    &[
        3.703_703_703_703_703_703_703_703_703_7E-2,
        0.0,
        0.0,
        1.708_286_087_294_738_712_796_044_821_73E-1,
        1.254_676_875_668_224_250_166_918_141_23E-1,
    ],
    &[
        3.710_937_5E-2,
        0.0,
        0.0,
        1.702_522_110_195_440_393_149_780_602_72E-1,
        6.021_653_898_045_596_068_502_193_972_83E-2,
        -1.757_812_5E-2,
    ],
    &[
        3.709_200_011_850_479_271_087_793_198_36E-2,
        0.0,
        0.0,
        1.703_839_257_122_399_938_102_140_547_05E-1,
        1.072_620_304_463_732_846_518_091_991_68E-1,
        -1.531_943_774_862_440_175_279_361_582_36E-2,
        8.273_789_163_814_022_887_584_737_660_02E-3,
    ],
    &[
        6.241_109_587_160_757_171_144_295_778_12E-1,
        0.0,
        0.0,
        -3.360_892_629_446_941_294_068_571_098_25E0,
        -8.682_193_468_417_260_068_181_898_914_53E-1,
        2.759_209_969_944_670_830_494_156_007_97E1,
        2.015_406_755_047_789_340_861_867_889_79E1,
        -4.348_988_418_106_995_884_773_662_551_44E1,
    ],
    &[
        4.776_625_364_382_643_658_904_339_085_27E-1,
        0.0,
        0.0,
        -2.488_114_619_971_667_641_926_425_864_68E0,
        -5.902_908_268_368_429_963_714_464_757_43E-1,
        2.123_005_144_818_119_423_472_889_498_97E1,
        1.527_923_363_288_242_358_325_969_229_38E1,
        -3.328_821_096_898_486_291_944_532_655_87E1,
        -2.033_120_170_850_862_613_582_229_285_93E-2,
    ],
    &[
        -9.371_424_300_859_873_257_170_402_165_8E-1,
        0.0,
        0.0,
        5.186_372_428_844_063_708_300_238_532_09E0,
        1.091_437_348_996_729_578_185_002_546_54E0,
        -8.149_787_010_746_926_125_139_972_673_57E0,
        -1.852_006_565_999_695_986_415_661_807_01E1,
        2.273_948_709_935_050_428_189_700_567_34E1,
        2.493_605_552_679_652_389_870_893_967_62E0,
        -3.046_764_471_898_219_500_382_366_902_2E0,
    ],
    &[
        2.273_310_147_516_538_207_923_597_684_49E0,
        0.0,
        0.0,
        -1.053_449_546_673_725_019_840_666_898_79E1,
        -2.000_872_058_224_862_499_096_757_184_44E0,
        -1.795_893_186_311_879_891_727_659_505_34E1,
        2.794_888_452_941_996_005_084_998_088_37E1,
        -2.858_998_277_135_023_694_740_655_086_74E0,
        -8.872_856_933_530_629_544_335_492_892_58E0,
        1.236_056_717_579_430_306_472_662_015_28E1,
        6.433_927_460_157_635_303_559_704_840_46E-1,
    ],
];

const B: [f64; 12] = [
    5.429_373_411_656_876_223_805_357_663_63E-2,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450_312_892_752_408_881_441_139_505_66E0,
    1.891_517_899_314_500_383_042_815_990_44E0,
    -5.801_203_960_010_584_781_467_211_422_7E0,
    3.111_643_669_578_198_944_089_160_623_7E-1,
    -1.521_609_496_625_160_785_561_788_068_05E-1,
    2.013_654_008_040_303_483_747_765_375_01E-1,
    4.471_061_572_777_259_051_768_855_690_43E-2,
];

const BHH: [f64; 3] = [
    0.244_094_488_188_976_377_952_755_905_512,
    0.733_846_688_281_611_857_341_361_741_547,
    0.022_058_823_529_411_764_705_882_352_941_2,
];

const E: [f64; 12] = [
    0.131_200_449_941_948_807_325_010_299_6E-01,
    0.0,
    0.0,
    0.0,
    0.0,
    -0.122_515_644_637_620_444_072_056_975_3E+01,
    -0.495_758_949_657_250_191_521_407_995_2E+00,
    0.166_437_718_245_498_653_696_153_041_5E+01,
    -0.350_328_848_749_973_681_688_648_729_0E+00,
    0.334_179_118_713_017_479_029_731_884_1E+00,
    0.819_232_064_851_157_124_657_074_261_3E-01,
    -0.223_553_078_638_862_952_588_442_784_5E-01,
];

/// Stateful DOP853 stepper. Integration proceeds through successive calls to
/// [`Dop853::advance_to`], which land exactly on the requested abscissa and keep the
/// step-size history between calls.
#[derive(Clone, Debug)]
pub struct Dop853<const N: usize> {
    t: f64,
    y: [f64; N],
    f: [f64; N],
    h: f64,
    facold: f64,
    fresh: bool,
    opts: OdeOptions,
    stats: OdeStats,
}

fn max_abs_norm<const N: usize>(v: &[f64; N], sc: &[f64; N]) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        let q = v[i] / sc[i];
        s += q * q;
    }
    (s / N as f64).sqrt()
}

impl<const N: usize> Dop853<N> {
    /// The initial state is passed through [`OdeSystem::rebase`] like every accepted one.
    pub fn new<S: OdeSystem<N>>(sys: &S, t0: f64, mut y0: [f64; N], opts: OdeOptions) -> Self {
        sys.rebase(t0, &mut y0);
        let mut f = [0.0; N];
        sys.rhs(t0, &y0, &mut f);
        Dop853 {
            t: t0,
            y: y0,
            f,
            h: opts.h_init,
            facold: 1e-4,
            fresh: true,
            opts,
            stats: OdeStats {
                evals: 1,
                ..Default::default()
            },
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    pub fn stats(&self) -> OdeStats {
        self.stats
    }

    fn scale(&self, y0: &[f64; N], y1: &[f64; N]) -> [f64; N] {
        let mut sc = [0.0; N];
        for i in 0..N {
            sc[i] = self.opts.atol + self.opts.rtol * y0[i].abs().max(y1[i].abs());
        }
        sc
    }

    fn initial_step<S: OdeSystem<N>>(&mut self, sys: &S, dir: f64) -> f64 {
        let sc = self.scale(&self.y, &self.y);
        let d0 = max_abs_norm(&self.y, &sc);
        let d1 = max_abs_norm(&self.f, &sc);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        h0 = h0.min(self.opts.h_max);
        let mut y1 = [0.0; N];
        for i in 0..N {
            y1[i] = self.y[i] + dir * h0 * self.f[i];
        }
        let mut f1 = [0.0; N];
        sys.rhs(self.t + dir * h0, &y1, &mut f1);
        self.stats.evals += 1;
        let mut diff = [0.0; N];
        for i in 0..N {
            diff[i] = f1[i] - self.f[i];
        }
        let d2 = max_abs_norm(&diff, &sc) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 8.0)
        };
        (100.0 * h0).min(h1).min(self.opts.h_max)
    }

    /// One trial step of size h; returns (y_new, scaled error).
    fn trial<S: OdeSystem<N>>(&mut self, sys: &S, h: f64) -> ([f64; N], f64) {
        let mut k = [[0.0; N]; 12];
        k[0] = self.f;
        let mut ys = [0.0; N];
        for s in 1..12 {
            for i in 0..N {
                let mut acc = 0.0;
                for (j, a) in A[s].iter().enumerate() {
                    if *a != 0.0 {
                        acc += a * k[j][i];
                    }
                }
                ys[i] = self.y[i] + h * acc;
            }
            sys.rhs(self.t + C[s] * h, &ys, &mut k[s]);
        }
        self.stats.evals += 11;
        let mut y_new = [0.0; N];
        let mut err5 = 0.0;
        let mut err3 = 0.0;
        let mut bk = [0.0; N];
        for i in 0..N {
            let mut acc = 0.0;
            for (s, b) in B.iter().enumerate() {
                acc += b * k[s][i];
            }
            bk[i] = acc;
            y_new[i] = self.y[i] + h * acc;
        }
        let mut sc = self.scale(&self.y, &y_new);
        sys.error_scale(&self.y, &y_new, self.opts.rtol, &mut sc);
        for i in 0..N {
            let mut e = 0.0;
            for (s, es) in E.iter().enumerate() {
                e += es * k[s][i];
            }
            let e3 = bk[i] - BHH[0] * k[0][i] - BHH[1] * k[8][i] - BHH[2] * k[11][i];
            err5 += (e / sc[i]).powi(2);
            err3 += (e3 / sc[i]).powi(2);
        }
        let mut deno = err5 + 0.01 * err3;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h.abs() * err5 * (1.0 / (deno * N as f64)).sqrt();
        (y_new, err)
    }

    /// Integrates to `t_end`, calling `observer(t, y)` after every accepted step.
    pub fn advance_to<S: OdeSystem<N>, F: FnMut(f64, &[f64; N])>(
        &mut self,
        sys: &S,
        t_end: f64,
        mut observer: F,
    ) -> Result<(), OdeError> {
        if t_end == self.t {
            return Ok(());
        }
        let dir = (t_end - self.t).signum();
        if self.fresh || self.h == 0.0 {
            self.h = self.initial_step(sys, dir);
            self.fresh = false;
        }
        let mut h = self.h.abs();
        let mut reject = false;
        let mut retries = 0usize;
        let expo1 = 1.0 / 8.0 - self.opts.beta * 0.2;
        let facc1 = 1.0 / self.opts.fac_min;
        let facc2 = 1.0 / self.opts.fac_max;
        let mut steps = 0usize;
        loop {
            steps += 1;
            if steps > self.opts.max_steps {
                return Err(OdeError::MaxStepsExceeded {
                    t: self.t,
                    steps: self.opts.max_steps,
                });
            }
            let limit = sys.max_step(self.t, &self.y, &self.f, dir);
            let mut h_try = h.min(self.opts.h_max).min(limit);
            let remaining = (t_end - self.t).abs();
            let mut last = false;
            if 1.01 * h_try >= remaining {
                h_try = remaining;
                last = true;
            }
            if h_try <= 1e-15 * self.t.abs().max(1e-300) || h_try < 1e-300 {
                return Err(OdeError::StepSizeUnderflow { t: self.t, h: h_try });
            }
            let hs = dir * h_try;
            let (y_new, err) = self.trial(sys, hs);
            if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                // Treat as a failed step; shrink hard.
                self.stats.rejected += 1;
                h = h_try * 0.1;
                reject = true;
                if h < 1e-300 {
                    return Err(OdeError::NonFinite { t: self.t });
                }
                continue;
            }
            let fac11 = err.powf(expo1);
            if err <= 1.0 {
                match sys.review_step(self.t, &self.y, &y_new, hs) {
                    StepReview::Accept => {}
                    StepReview::Shrink(f) => {
                        self.stats.reviewed += 1;
                        retries += 1;
                        if retries > 200 {
                            return Err(OdeError::ReviewFailed {
                                t: self.t,
                                retries,
                            });
                        }
                        h = h_try * f.clamp(1e-6, 0.999);
                        continue;
                    }
                }
                retries = 0;
                let fac = fac11 / self.facold.powf(self.opts.beta);
                let fac = facc2.max(facc1.min(fac / self.opts.safety));
                let mut h_new = h_try / fac;
                self.facold = err.max(1e-4);
                self.stats.accepted += 1;
                self.t = if last { t_end } else { self.t + hs };
                self.y = y_new;
                sys.rebase(self.t, &mut self.y);
                sys.rhs(self.t, &self.y, &mut self.f);
                self.stats.evals += 1;
                observer(self.t, &self.y);
                if reject {
                    h_new = h_new.min(h_try);
                }
                reject = false;
                // A step clipped to land on t_end should not shrink the next one.
                h = if last { h.max(h_new) } else { h_new };
                self.h = h;
                if last {
                    return Ok(());
                }
            } else {
                self.stats.rejected += 1;
                reject = true;
                h = h_try / facc1.min(fac11 / self.opts.safety);
            }
        }
    }
}

/// Integrates from `t0` to `t1` in one call, returning the final state.
pub fn integrate<const N: usize, S: OdeSystem<N>>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    opts: OdeOptions,
) -> Result<([f64; N], OdeStats), OdeError> {
    let mut stepper = Dop853::new(sys, t0, y0, opts);
    stepper.advance_to(sys, t1, |_, _| {})?;
    Ok((*stepper.y(), stepper.stats()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tableau_row_sums_match_nodes() {
        for s in 1..12 {
            let sum: f64 = A[s].iter().sum();
            assert!((sum - C[s]).abs() < 1e-12, "row {s}: {sum} vs {}", C[s]);
        }
    }

    #[test]
    fn weights_satisfy_low_order_conditions() {
        // b·1 = 1, b·c = 1/2, b·c² = 1/3, ..., b·c⁷ = 1/8
        for q in 0..8 {
            let s: f64 = B.iter().zip(C.iter()).map(|(b, c)| b * c.powi(q)).sum();
            assert!((s - 1.0 / (q as f64 + 1.0)).abs() < 1e-12, "q={q}: {s}");
        }
        // the error weights annihilate constants; the third-order embedded weights sum to 1
        let es: f64 = E.iter().sum();
        assert!(es.abs() < 1e-12);
        let bs: f64 = BHH.iter().sum();
        assert!((bs - 1.0).abs() < 1e-12);
    }

    struct Oscillator;
    impl OdeSystem<2> for Oscillator {
        fn rhs(&self, _t: f64, y: &[f64; 2], dy: &mut [f64; 2]) {
            dy[0] = y[1];
            dy[1] = -y[0];
        }
    }

    struct Nonautonomous;
    impl OdeSystem<1> for Nonautonomous {
        fn rhs(&self, t: f64, _y: &[f64; 1], dy: &mut [f64; 1]) {
            dy[0] = (3.0 * t).cos() * t;
        }
    }

    #[test]
    fn harmonic_oscillator_over_many_periods() {
        let tmax = 200.0 * std::f64::consts::PI;
        let (y, stats) = integrate(&Oscillator, 0.0, [1.0, 0.0], tmax, OdeOptions::with_tol(1e-12)).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9, "{y:?}");
        assert!(y[1].abs() < 1e-9);
        assert!(stats.accepted > 100);
    }

    #[test]
    fn backward_integration_and_time_dependent_rhs() {
        // y' = t cos 3t, y(0)=0 → y = cos(3t)/9 + t sin(3t)/3 − 1/9
        let exact = |t: f64| (3.0 * t).cos() / 9.0 + t * (3.0 * t).sin() / 3.0 - 1.0 / 9.0;
        let (y, _) = integrate(&Nonautonomous, 0.0, [0.0], -7.5, OdeOptions::with_tol(1e-12)).unwrap();
        assert!((y[0] - exact(-7.5)).abs() < 1e-10);
    }

    #[test]
    fn successive_targets_land_exactly() {
        let mut st = Dop853::new(&Oscillator, 0.0, [1.0, 0.0], OdeOptions::with_tol(1e-11));
        for k in 1..=20 {
            let t = 0.37 * k as f64;
            st.advance_to(&Oscillator, t, |_, _| {}).unwrap();
            assert_eq!(st.t(), t);
            assert!((st.y()[0] - t.cos()).abs() < 1e-9);
        }
    }

    struct Capped;
    impl OdeSystem<1> for Capped {
        fn rhs(&self, _t: f64, _y: &[f64; 1], dy: &mut [f64; 1]) {
            dy[0] = 1.0;
        }
        fn max_step(&self, _t: f64, _y: &[f64; 1], _dy: &[f64; 1], _dir: f64) -> f64 {
            0.125
        }
    }

    #[test]
    fn max_step_is_respected() {
        let mut st = Dop853::new(&Capped, 0.0, [0.0], OdeOptions::default());
        let mut last = 0.0;
        st.advance_to(&Capped, 3.0, |t, _| {
            assert!(t - last <= 0.125 + 1e-15);
            last = t;
        })
        .unwrap();
        assert!(st.stats().accepted >= 24);
    }
}
