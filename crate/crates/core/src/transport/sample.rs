//! Random valid messages, for fuzzing the codec.

use rand::Rng;

use super::{FrameMsg, Message, ResultMsg};
use crate::types::Stage;

fn f32s<const N: usize>(rng: &mut impl Rng) -> [f32; N] {
    std::array::from_fn(|_| rng.random_range(-1e6f32..1e6))
}

fn bytes(rng: &mut impl Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random()).collect()
}

fn text(rng: &mut impl Rng, max: usize) -> String {
    let n = rng.random_range(0..=max);
    (0..n)
        .map(|_| {
            if rng.random_bool(0.1) {
                'é'
            } else {
                rng.random_range(' '..='~')
            }
        })
        .collect()
}

/// A message of a random variant. Images are at most `max_dim` on a side.
pub fn random_message(rng: &mut impl Rng, max_dim: u32) -> Message {
    let max_dim = max_dim.max(1);
    match rng.random_range(1..=8u8) {
        1 => Message::Hello {
            proto_version: rng.random(),
            session_cfg_json: text(rng, 40).into_bytes(),
        },
        2 => Message::HelloAck {
            session_id: rng.random(),
            epoch_us: rng.random(),
        },
        3 => {
            let (w, h) = (rng.random_range(1..=max_dim), rng.random_range(1..=max_dim));
            let n = (w * h) as usize;
            let depth = rng
                .random_bool(0.5)
                .then(|| (0..n).map(|_| rng.random_range(0.0f32..20.0)).collect());
            Message::Frame(
                FrameMsg::new(rng.random(), rng.random(), w, h, f32s(rng), f32s(rng), bytes(rng, n * 3), depth)
                    .expect("lengths match by construction"),
            )
        }
        4 => {
            let (w, h) = (rng.random_range(1..=max_dim), rng.random_range(1..=max_dim));
            let n = (w * h) as usize;
            let timings = (0..rng.random_range(0..6))
                .map(|_| {
                    let name = if rng.random_bool(0.7) {
                        Stage::ALL[rng.random_range(0..Stage::ALL.len())].as_str().to_string()
                    } else {
                        text(rng, 12)
                    };
                    (name, rng.random())
                })
                .collect();
            Message::Result(
                ResultMsg::new(
                    rng.random(),
                    rng.random_range(0..16),
                    rng.random_bool(0.5).then(|| f32s(rng)),
                    rng.random_bool(0.5).then(|| f32s(rng)),
                    timings,
                    w,
                    h,
                    bytes(rng, n * 3),
                    rng.random_bool(0.5).then(|| bytes(rng, n * 3)),
                )
                .expect("fields valid by construction"),
            )
        }
        5 => Message::Control {
            control_json: text(rng, 60).into_bytes(),
        },
        6 => {
            let n = rng.random_range(0..80);
            Message::Metrics {
                report_json: bytes(rng, n),
            }
        }
        7 => Message::Error {
            code: rng.random(),
            detail: text(rng, 30),
        },
        _ => Message::Bye,
    }
}
