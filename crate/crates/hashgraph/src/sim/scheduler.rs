//! Scheduler strategies: the adversary's control over message order.
//!
//! Every strategy implements [`Scheduler`] and is registered by name in
//! [`SchedulerRegistry`], so runs select one at runtime via config or CLI.
//! The delay attack in [`crate::attack`] implements the same trait.

use crate::event::{EventId, PartyId};
use crate::sim::{SimConfig, SimView};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One scheduling decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// Deliver a pending sync by id.
    Deliver(u64),
    /// Let a party snapshot its graph and put a sync to `to` in flight.
    Initiate { from: PartyId, to: PartyId },
}

pub trait Scheduler {
    fn name(&self) -> &'static str;

    /// Pick the next action, or `None` when the strategy has nothing left to
    /// drive (the engine then drains pending deliveries).
    fn next_action(&mut self, view: &SimView<'_>, rng: &mut ChaCha8Rng) -> Option<Action>;
}

/// Oldest-first delivery alternating with round-robin sync initiation. Never
/// starves a delivery, which is what liveness runs rely on.
pub struct FairScheduler {
    turn: u64,
}

impl FairScheduler {
    pub fn new() -> FairScheduler {
        FairScheduler { turn: 0 }
    }
}

impl Default for FairScheduler {
    fn default() -> Self {
        Self::new()
    }
}

impl Scheduler for FairScheduler {
    fn name(&self) -> &'static str {
        "fair"
    }

    fn next_action(&mut self, view: &SimView<'_>, rng: &mut ChaCha8Rng) -> Option<Action> {
        let turn = self.turn;
        self.turn += 1;
        if view.pending_count() > 0 && turn.is_multiple_of(2) {
            return Some(Action::Deliver(view.oldest_pending()?));
        }
        let n = view.n() as u32;
        let from = PartyId((turn / 2) as u32 % n);
        let to = view.random_other(from, rng);
        Some(Action::Initiate { from, to })
    }
}

/// Adversarially random: reorders deliveries arbitrarily by picking a
/// uniformly random pending sync, interleaved with random initiations.
/// Every pending delivery keeps a positive per-step delivery probability,
/// so delivery is eventual with probability one; the engine's final drain
/// covers whatever is still in flight at the end.
pub struct RandomScheduler;

impl Scheduler for RandomScheduler {
    fn name(&self) -> &'static str {
        "random"
    }

    fn next_action(&mut self, view: &SimView<'_>, rng: &mut ChaCha8Rng) -> Option<Action> {
        let pending = view.pending_count();
        if pending > 0 && rng.gen_bool(0.6) {
            return Some(Action::Deliver(
                view.nth_pending(rng.gen_range(0..pending))?,
            ));
        }
        let n = view.n() as u32;
        let from = PartyId(rng.gen_range(0..n));
        let to = view.random_other(from, rng);
        Some(Action::Initiate { from, to })
    }
}

type Factory = fn(&SimConfig) -> Box<dyn Scheduler>;

/// Name-keyed strategy table.
pub struct SchedulerRegistry {
    entries: Vec<(&'static str, Factory)>,
}

impl SchedulerRegistry {
    /// The built-in strategies. The delay attack has its own entry point
    /// because it needs a target witness on top of the simulation config.
    pub fn builtin() -> SchedulerRegistry {
        let mut reg = SchedulerRegistry {
            entries: Vec::new(),
        };
        reg.register("fair", |_| Box::new(FairScheduler::new()));
        reg.register("random", |_| Box::new(RandomScheduler));
        reg
    }

    pub fn register(&mut self, name: &'static str, factory: Factory) {
        self.entries.push((name, factory));
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn create(
        &self,
        name: &str,
        cfg: &SimConfig,
    ) -> Result<Box<dyn Scheduler>, crate::error::SimError> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, f)| f(cfg))
            .ok_or_else(|| crate::error::SimError::UnknownScheduler(name.to_string()))
    }
}

/// Head metadata of a pending delivery, exposed to schedulers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingInfo {
    pub id: u64,
    pub from: PartyId,
    pub to: PartyId,
    pub head: EventId,
}
