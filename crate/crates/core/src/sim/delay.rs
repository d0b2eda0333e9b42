use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::message::Message;
use crate::time::Rational;
use crate::{Params, ProcessId, SimTime};

/// Chooses when a message is delivered. The engine rejects choices that
/// violate the network model, so policies only need to be deterministic.
pub trait DelayPolicy: Send {
    fn deliver_at(&mut self, from: ProcessId, to: ProcessId, msg: &Message, sent_at: SimTime) -> SimTime;
}

/// A uniformly random multiple of 1/16 in (0, 1].
pub fn random_sixteenth(rng: &mut ChaCha8Rng) -> Rational {
    Rational::new(rng.gen_range(1..=16), 16)
}

/// Every message takes exactly δ after GST; messages sent earlier arrive at
/// GST + δ.
pub struct MaxDelay {
    params: Params,
}

impl MaxDelay {
    pub fn new(params: &Params) -> Self {
        MaxDelay { params: params.clone() }
    }
}

impl DelayPolicy for MaxDelay {
    fn deliver_at(&mut self, _from: ProcessId, _to: ProcessId, _msg: &Message, sent_at: SimTime) -> SimTime {
        if sent_at >= self.params.gst {
            sent_at + self.params.delta
        } else {
            self.params.gst + self.params.delta
        }
    }
}

/// Delay `u·δ` with random `u` in (0, 1], before and after GST alike.
pub struct BoundedUniform {
    delta: SimTime,
    rng: ChaCha8Rng,
}

impl BoundedUniform {
    pub fn new(params: &Params, rng: ChaCha8Rng) -> Self {
        BoundedUniform { delta: params.delta, rng }
    }
}

impl DelayPolicy for BoundedUniform {
    fn deliver_at(&mut self, _from: ProcessId, _to: ProcessId, _msg: &Message, sent_at: SimTime) -> SimTime {
        sent_at + self.delta.scale(random_sixteenth(&mut self.rng))
    }
}

/// Post-GST delays `u·δ`; a pre-GST message arrives at a random point of
/// `(sent_at, GST + δ]`.
pub struct UniformCapped {
    params: Params,
    rng: ChaCha8Rng,
}

impl UniformCapped {
    pub fn new(params: &Params, rng: ChaCha8Rng) -> Self {
        UniformCapped { params: params.clone(), rng }
    }
}

impl DelayPolicy for UniformCapped {
    fn deliver_at(&mut self, _from: ProcessId, _to: ProcessId, _msg: &Message, sent_at: SimTime) -> SimTime {
        let u = random_sixteenth(&mut self.rng);
        if sent_at >= self.params.gst {
            sent_at + self.params.delta.scale(u)
        } else {
            sent_at + (self.params.gst + self.params.delta - sent_at).scale(u)
        }
    }
}
