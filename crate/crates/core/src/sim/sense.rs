use super::config::EpisodeConfig;
use super::world::WorldState;
use crate::event::{EgoFrame, EventElement, EventList, GlobalState};

/// Builds the event list from ground truth, or `None` when no intruder lies
/// strictly inside the trigger radius. Vectors are goal-aligned.
pub fn sense_events(world: &WorldState, cfg: &EpisodeConfig) -> Option<EventList> {
    let ego = &world.ego;
    let to_goal = ego.goal - ego.position;
    let frame = EgoFrame::facing(to_goal);
    let elements: Vec<EventElement> = world
        .intruders
        .iter()
        .filter_map(|i| {
            let rel = i.position - ego.position;
            (rel.norm() < cfg.trigger_radius).then(|| EventElement {
                object_id: i.id,
                rel_position: frame.to_local(rel),
                rel_velocity: frame.to_local(i.velocity - ego.velocity),
                kind_onehot: i.kind.onehot(),
                risk: i.risk,
            })
        })
        .collect();
    if elements.is_empty() {
        return None;
    }
    Some(EventList {
        elements,
        global: GlobalState::new(frame.to_local(ego.velocity), frame.to_local(to_goal)),
        timestamp: world.time,
        frame,
    })
}
