//! Model-checked trials over forked sessions.
//!
//! Each session is paired with a plain map of the attributes it should show.
//! Random batches are applied to random sessions; accepted batches update only
//! that session's model, rejected ones update nothing.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use supportsim::world::{
    fork_session_with_id, EntityId, EntityKind, EpisodeSession, Mutation, WorldState, WorldView,
};

pub const SESSIONS: usize = 16;

const TICKET_STATUS: [&str; 5] = ["open", "pending", "escalated", "resolved", "closed"];
const PRIORITY: [&str; 4] = ["low", "medium", "high", "urgent"];

/// `(entity, attribute)` -> value; `None` attribute key marks the entity itself.
type Key = (EntityId, Option<String>);
type Model = BTreeMap<Key, Option<Value>>;
type Update = (Key, Option<Value>);

struct Fixture {
    tickets: Vec<EntityId>,
    customers: Vec<EntityId>,
    /// Nothing links to inventory levels, so they are safe to delete.
    inventory: Vec<EntityId>,
}

impl Fixture {
    fn new(world: &WorldState) -> Fixture {
        let ids = |k| {
            world
                .entities_of(k)
                .into_iter()
                .map(|e| e.id.clone())
                .collect::<Vec<_>>()
        };
        Fixture {
            tickets: ids(EntityKind::SupportTicket),
            customers: ids(EntityKind::Customer),
            inventory: ids(EntityKind::InventoryLevel),
        }
    }

    fn base_model(&self, world: &WorldState) -> Model {
        let mut m = Model::new();
        for t in &self.tickets {
            for a in ["status", "priority"] {
                m.insert(
                    (t.clone(), Some(a.into())),
                    world.get(t).unwrap().attr(a).cloned(),
                );
            }
        }
        for c in &self.customers {
            m.insert(
                (c.clone(), Some("phone".into())),
                world.get(c).unwrap().attr("phone").cloned(),
            );
        }
        for i in &self.inventory {
            m.insert((i.clone(), None), Some(json!(true)));
        }
        m
    }
}

fn observe(view: &EpisodeSession, key: &(EntityId, Option<String>)) -> Option<Value> {
    let e = view.get(&key.0);
    match &key.1 {
        None => e.map(|_| json!(true)),
        Some(a) => e.and_then(|e| e.attr(a).cloned()),
    }
}

fn agrees(session: &EpisodeSession, model: &Model) -> Result<(), String> {
    for (key, want) in model {
        let got = observe(session, key);
        if &got != want {
            return Err(format!(
                "session {} shows {:?} for {key:?}, model says {want:?}",
                session.id(),
                got
            ));
        }
    }
    Ok(())
}

/// A valid mutation plus the model updates it implies.
fn valid_op(rng: &mut ChaCha8Rng, fx: &Fixture, model: &Model) -> Option<(Mutation, Vec<Update>)> {
    match rng.gen_range(0..4) {
        0 | 1 => {
            let t = fx.tickets.choose(rng)?.clone();
            let (attr, value) = if rng.gen_bool(0.5) {
                ("status", *TICKET_STATUS.choose(rng).unwrap())
            } else {
                ("priority", *PRIORITY.choose(rng).unwrap())
            };
            Some((
                Mutation::set(t.clone(), attr, value),
                vec![((t, Some(attr.into())), Some(json!(value)))],
            ))
        }
        2 => {
            let c = fx.customers.choose(rng)?.clone();
            let phone = format!(
                "+1-555-{:03}-{:04}",
                rng.gen_range(0..1000),
                rng.gen_range(0..10_000)
            );
            Some((
                Mutation::set(c.clone(), "phone", phone.clone()),
                vec![((c, Some("phone".into())), Some(json!(phone)))],
            ))
        }
        _ => {
            let live: Vec<&EntityId> = fx
                .inventory
                .iter()
                .filter(|i| model.get(&((*i).clone(), None)) == Some(&Some(json!(true))))
                .collect();
            let i = (*live.choose(rng)?).clone();
            Some((Mutation::delete(i.clone()), vec![((i, None), None)]))
        }
    }
}

fn doomed_op(rng: &mut ChaCha8Rng, fx: &Fixture, model: &Model) -> Mutation {
    match rng.gen_range(0..5) {
        // Schema breaks go to fields no valid op writes, so a later op in the batch cannot repair them.
        0 => Mutation::set(
            fx.tickets.choose(rng).unwrap().clone(),
            "notes",
            "not a list",
        ),
        1 => Mutation::set(
            EntityId::new(EntityKind::SupportTicket, "TKT-99999"),
            "status",
            "open",
        ),
        2 => Mutation::set(
            fx.tickets.choose(rng).unwrap().clone(),
            "customer_id",
            "CUS-99999",
        ),
        // Orders link to customers.
        3 => Mutation::delete(fx.customers.choose(rng).unwrap().clone()),
        _ => {
            let dead: Vec<&EntityId> = fx
                .inventory
                .iter()
                .filter(|i| model.get(&((*i).clone(), None)) == Some(&None))
                .collect();
            match dead.choose(rng) {
                Some(i) => Mutation::delete((*i).clone()),
                None => Mutation::set(fx.tickets.choose(rng).unwrap().clone(), "subject", 7),
            }
        }
    }
}

/// One trial: 16 sessions forked from `world`, `steps` random batches. Returns a description of the first broken property.
pub fn run_trial(world: &Arc<WorldState>, seed: u64, steps: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fx = Fixture::new(world);
    let base_model = fx.base_model(world);
    let base_digest = world.digest().to_string();
    let mut sessions: Vec<EpisodeSession> = (0..SESSIONS)
        .map(|i| fork_session_with_id(world, format!("trial-{seed}-{i}")))
        .collect();
    let mut models: Vec<Model> = vec![base_model.clone(); SESSIONS];

    for _ in 0..steps {
        let i = rng.gen_range(0..SESSIONS);
        let mut batch = Vec::new();
        let mut updates = Vec::new();
        for _ in 0..rng.gen_range(1..=3) {
            // Plan against the model as it would be after earlier ops in this batch.
            let mut planned = models[i].clone();
            planned.extend(updates.iter().cloned());
            if let Some((m, u)) = valid_op(&mut rng, &fx, &planned) {
                batch.push(m);
                updates.extend(u);
            }
        }
        let reject = rng.gen_bool(0.3);
        if reject {
            let mut planned = models[i].clone();
            planned.extend(updates.iter().cloned());
            let bad = doomed_op(&mut rng, &fx, &planned);
            let at = rng.gen_range(0..=batch.len());
            batch.insert(at, bad);
        }
        if batch.is_empty() {
            continue;
        }
        let shown = format!("{batch:?}");
        let before_version = sessions[i].version();
        let before_digest = reject.then(|| sessions[i].digest());
        match (sessions[i].apply_batch(batch), reject) {
            (Ok(v), false) => {
                if v != before_version + 1 {
                    return Err(format!("version went {before_version} -> {v}"));
                }
                models[i].extend(updates);
                agrees(&sessions[i], &models[i]).map_err(|e| format!("read-your-writes: {e}"))?;
            }
            (Err(_), true) => {
                if sessions[i].version() != before_version
                    || Some(sessions[i].digest()) != before_digest
                {
                    return Err(format!(
                        "rejected batch left a trace in {}",
                        sessions[i].id()
                    ));
                }
                agrees(&sessions[i], &models[i]).map_err(|e| format!("atomicity: {e}"))?;
            }
            (Ok(_), true) => return Err(format!("a doomed batch was accepted: {shown}")),
            (Err(e), false) => return Err(format!("a valid batch was rejected: {e}")),
        }
        let j = rng.gen_range(0..SESSIONS);
        if j != i {
            agrees(&sessions[j], &models[j]).map_err(|e| format!("isolation: {e}"))?;
        }
    }
    for (s, m) in sessions.iter().zip(&models) {
        agrees(s, m).map_err(|e| format!("isolation at end: {e}"))?;
        if m == &base_model && s.digest() != base_digest {
            return Err(format!(
                "{} matches the base model but not the base digest",
                s.id()
            ));
        }
    }
    if world.digest() != base_digest || supportsim::world::digest_of(world.as_ref()) != base_digest
    {
        return Err("base world changed".into());
    }
    Ok(())
}
