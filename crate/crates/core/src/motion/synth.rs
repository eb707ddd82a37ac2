//! Parametric toy motions driven by `<verb> <speed> <direction>` prompts.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{MotionTensor, CHANNELS};
use crate::error::{invalid, Result};
use crate::numcore::Tensor;

pub const SYNTH_NOISE: f64 = 0.01;
/// Frames spanned by one cycle of a unit-frequency verb at slow speed.
pub const FRAMES_PER_CYCLE: f64 = 32.0;
const VELOCITY_GAIN: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    pub verbs: Vec<String>,
    pub speeds: Vec<String>,
    pub directions: Vec<String>,
}

impl Default for Vocab {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        Vocab {
            verbs: s(&["walk", "run", "jump", "wave", "kick", "spin"]),
            speeds: s(&["slow", "fast"]),
            directions: s(&["forward", "backward", "left", "right"]),
        }
    }
}

impl Vocab {
    pub fn prompts(&self) -> Vec<String> {
        let mut out = Vec::new();
        for v in &self.verbs {
            for s in &self.speeds {
                for d in &self.directions {
                    out.push(format!("{v} {s} {d}"));
                }
            }
        }
        out
    }
}

/// Per-verb motion family.
struct Family {
    /// Cycles per `FRAMES_PER_CYCLE` frames.
    freq: f64,
    /// Forward root drift per cycle.
    drift: f64,
    /// Heading turn per cycle (radians).
    turn: f64,
    /// `(joint role, axis, amplitude, phase)` oscillators.
    osc: &'static [(Role, usize, f64, f64)],
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    All,
    Root,
    Arms,
    LeftArm,
    RightHand,
    Leg,
    Head,
}

fn family(verb: &str) -> Option<Family> {
    use Role::*;
    let f = match verb {
        "walk" => Family {
            freq: 1.0,
            drift: 0.6,
            turn: 0.0,
            osc: &[(Leg, 2, 0.35, 0.0), (Arms, 2, 0.2, PI), (Root, 1, 0.04, FRAC_PI_2)],
        },
        "run" => Family {
            freq: 1.5,
            drift: 1.2,
            turn: 0.0,
            osc: &[(Leg, 2, 0.6, 0.0), (Arms, 2, 0.45, PI), (All, 1, 0.12, FRAC_PI_2)],
        },
        "jump" => Family {
            freq: 1.0,
            drift: 0.2,
            turn: 0.0,
            osc: &[(All, 1, 0.5, 0.0), (Arms, 0, 0.25, FRAC_PI_2)],
        },
        "wave" => Family {
            freq: 2.0,
            drift: 0.0,
            turn: 0.0,
            osc: &[(RightHand, 1, 0.3, 0.0), (RightHand, 0, 0.45, FRAC_PI_2), (Head, 0, 0.05, 0.0)],
        },
        "kick" => Family {
            freq: 1.0,
            drift: 0.1,
            turn: 0.0,
            osc: &[(Leg, 2, 0.9, 0.0), (Leg, 1, 0.4, FRAC_PI_2), (LeftArm, 0, 0.2, PI)],
        },
        "spin" => Family {
            freq: 1.0,
            drift: 0.0,
            turn: PI,
            osc: &[(Arms, 1, 0.15, 0.0)],
        },
        _ => return None,
    };
    Some(f)
}

fn role_matches(role: Role, joint: usize, joints: usize) -> bool {
    let tree = joints == super::DEFAULT_JOINTS.len();
    match role {
        Role::All => true,
        Role::Root => joint == 0,
        Role::Head => if tree { joint == 2 } else { joint + 1 == joints },
        Role::Arms => if tree { (3..=6).contains(&joint) } else { joint % 2 == 1 },
        Role::LeftArm => if tree { joint == 3 || joint == 4 } else { joint % 4 == 1 },
        Role::RightHand => if tree { joint == 6 } else { joint + 2 == joints },
        Role::Leg => if tree { joint == 7 } else { joint == 1 },
    }
}

fn rest_pose(joint: usize, joints: usize) -> [f64; 3] {
    const TREE: [[f64; 3]; 8] = [
        [0.0, 0.0, 0.0],
        [0.0, 0.4, 0.0],
        [0.0, 0.8, 0.0],
        [-0.3, 0.5, 0.0],
        [-0.6, 0.2, 0.0],
        [0.3, 0.5, 0.0],
        [0.6, 0.2, 0.0],
        [0.1, -0.5, 0.0],
    ];
    if joints == TREE.len() {
        TREE[joint]
    } else {
        let side = if joint % 2 == 0 { -0.1 } else { 0.1 };
        [side, -0.5 + joint as f64 / joints.max(1) as f64, 0.0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionSpec {
    pub verb: String,
    pub speed: f64,
    pub heading: f64,
}

/// Validates a prompt against the vocabulary.
pub fn parse_prompt(prompt: &str, vocab: &Vocab) -> Result<MotionSpec> {
    let words: Vec<&str> = prompt.split_whitespace().collect();
    if words.len() != 3 {
        return Err(invalid!("prompt `{prompt}` is not `<verb> <speed> <direction>`"));
    }
    let (verb, speed, dir) = (words[0], words[1], words[2]);
    if !vocab.verbs.iter().any(|v| v == verb) || family(verb).is_none() {
        return Err(invalid!("unknown verb `{verb}`"));
    }
    if !vocab.speeds.iter().any(|v| v == speed) {
        return Err(invalid!("unknown speed `{speed}`"));
    }
    if !vocab.directions.iter().any(|v| v == dir) {
        return Err(invalid!("unknown direction `{dir}`"));
    }
    let speed = match speed {
        "slow" => 1.0,
        "fast" => 2.0,
        other => return Err(invalid!("unknown speed `{other}`")),
    };
    let heading = match dir {
        "forward" => 0.0,
        "left" => FRAC_PI_2,
        "backward" => PI,
        "right" => -FRAC_PI_2,
        other => return Err(invalid!("unknown direction `{other}`")),
    };
    Ok(MotionSpec {
        verb: verb.to_string(),
        speed,
        heading,
    })
}

fn positions(spec: &MotionSpec, joints: usize, frames: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
    let fam = family(&spec.verb).expect("validated verb");
    let mut pos = vec![[0.0; 3]; frames * joints];
    let mut yaw = vec![0.0; frames];
    let (hc, hs) = (spec.heading.cos(), spec.heading.sin());
    for f in 0..frames {
        let cycles = spec.speed * fam.freq * f as f64 / FRAMES_PER_CYCLE;
        let theta = TAU * cycles;
        let turn = fam.turn * cycles;
        yaw[f] = spec.heading + turn;
        let drift = fam.drift * spec.speed * f as f64 / (FRAMES_PER_CYCLE * fam.freq.max(1.0));
        for j in 0..joints {
            let mut p = rest_pose(j, joints);
            for &(role, axis, amp, phase) in fam.osc {
                if role_matches(role, j, joints) {
                    let side = if role == Role::Arms && p[0] < 0.0 { -1.0 } else { 1.0 };
                    p[axis] += side * amp * (theta + phase).sin();
                }
            }
            // body-frame spin, then world heading, then forward drift along heading
            let (tc, ts) = (turn.cos(), turn.sin());
            let (x, z) = (tc * p[0] + ts * p[2], -ts * p[0] + tc * p[2]);
            let (x, z) = (hc * x + hs * z, -hs * x + hc * z);
            pos[f * joints + j] = [x + hs * drift, p[1], z + hc * drift];
        }
    }
    (pos, yaw)
}

/// Noise-free motion for a validated prompt.
pub fn synth_clean(prompt: &str, vocab: &Vocab, joints: usize, frames: usize) -> Result<MotionTensor> {
    if joints == 0 || frames == 0 {
        return Err(invalid!("motion needs at least one frame and one joint"));
    }
    let spec = parse_prompt(prompt, vocab)?;
    let (pos, yaw) = positions(&spec, joints, frames);
    let mut data = Vec::with_capacity(frames * joints * CHANNELS);
    for f in 0..frames {
        for j in 0..joints {
            let p = pos[f * joints + j];
            let (a, b) = if frames == 1 {
                (p, p)
            } else if f == 0 {
                (pos[joints + j], p)
            } else {
                (p, pos[(f - 1) * joints + j])
            };
            data.extend_from_slice(&p);
            data.extend((0..3).map(|k| VELOCITY_GAIN * (a[k] - b[k])));
            // first two columns of Ry(yaw) Rx(tilt)
            let tilt = 0.3 * p[1];
            let (cy, sy, cx, sx) = (yaw[f].cos(), yaw[f].sin(), tilt.cos(), tilt.sin());
            data.extend_from_slice(&[cy, 0.0, -sy, sy * sx, cx, cy * sx]);
        }
    }
    MotionTensor::new(Tensor::new(&[frames, joints, CHANNELS], data)?)
}

/// `count` (prompt, motion) pairs cycling through a seed-shuffled list of
/// all vocabulary prompts.
pub fn synth_dataset(
    seed: u64,
    count: usize,
    joints: usize,
    frames: usize,
    vocab: &Vocab,
) -> Result<Vec<(String, MotionTensor)>> {
    if count < 1 {
        return Err(invalid!("corpus size must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prompts = vocab.prompts();
    if prompts.is_empty() {
        return Err(invalid!("empty vocabulary"));
    }
    for p in &prompts {
        parse_prompt(p, vocab)?;
    }
    prompts.shuffle(&mut rng);
    let noise = Normal::new(0.0, SYNTH_NOISE).expect("valid sigma");
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let prompt = prompts[i % prompts.len()].clone();
        let mut m = synth_clean(&prompt, vocab, joints, frames)?;
        for v in m.tensor_mut().data_mut() {
            *v += noise.sample(&mut rng);
        }
        out.push((prompt, m));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::spectral;

    #[test]
    fn seeded_corpus_is_reproducible() {
        let v = Vocab::default();
        let a = synth_dataset(5, 8, 8, 64, &v).unwrap();
        let b = synth_dataset(5, 8, 8, 64, &v).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        for (_, m) in &a {
            assert_eq!(m.tensor().shape(), &[64, 8, 12]);
            assert!(m.tensor().all_finite());
        }
        assert_ne!(a, synth_dataset(6, 8, 8, 64, &v).unwrap());
    }

    #[test]
    fn prompts_are_unique_within_one_pass() {
        let v = Vocab::default();
        let all = synth_dataset(1, 48, 8, 16, &v).unwrap();
        let mut prompts: Vec<_> = all.iter().map(|(p, _)| p.clone()).collect();
        prompts.sort();
        prompts.dedup();
        assert_eq!(prompts.len(), 48);
    }

    #[test]
    fn fast_is_slow_at_double_rate() {
        let v = Vocab::default();
        let slow = synth_clean("walk slow forward", &v, 8, 128).unwrap();
        let fast = synth_clean("walk fast forward", &v, 8, 64).unwrap();
        for f in 0..64 {
            for j in 0..8 {
                for c in 0..3 {
                    assert!((fast.get(f, j, c) - slow.get(2 * f, j, c)).abs() < 1e-12);
                }
            }
        }
        // dominant frequency of the leg swing doubles
        let peak = |m: &MotionTensor| {
            let n = m.frames();
            let x: Vec<f64> = (0..n).map(|f| m.get(f, 7, 2) - m.get(f, 0, 2)).collect();
            let (re, im) = spectral::rfft(&x, n, 1);
            (1..re.len())
                .max_by(|&a, &b| {
                    let pa = re[a].hypot(im[a]);
                    let pb = re[b].hypot(im[b]);
                    pa.partial_cmp(&pb).unwrap()
                })
                .unwrap()
        };
        let slow64 = synth_clean("walk slow forward", &v, 8, 64).unwrap();
        assert_eq!(peak(&fast), 2 * peak(&slow64));
    }

    #[test]
    fn directions_are_distinguishable() {
        let v = Vocab::default();
        let l = synth_clean("walk slow left", &v, 8, 32).unwrap();
        let r = synth_clean("walk slow right", &v, 8, 32).unwrap();
        assert!(l.tensor().max_abs_diff(r.tensor()) > 0.5);
    }

    #[test]
    fn unknown_tokens_are_rejected() {
        let v = Vocab::default();
        assert!(synth_clean("moonwalk slow forward", &v, 8, 8).is_err());
        assert!(synth_clean("walk medium forward", &v, 8, 8).is_err());
        let mut bad = Vocab::default();
        bad.verbs.push("crawl".into());
        assert!(synth_dataset(0, 4, 8, 8, &bad).is_err());
    }
}
