use crate::bag::{play, Bag};
use crate::bus::Bus;
use crate::controllers::ControlNode;
use crate::error::Result;
use crate::types::{SimTime, VelocityCommand};

/// Drives `node` from recorded inputs, without a plant.
///
/// The node sees each recorded envelope one tick after its timestamp and
/// runs on the same control grid as in a live run, for ticks `1..=until`.
/// Returns the `cmd_vel` commands it would have published, with their
/// ticks.
pub fn replay_node(bag: &Bag, node: &mut ControlNode, until: u64) -> Result<Vec<(u64, VelocityCommand)>> {
    let step = bag.step;
    let mut out = Vec::new();
    let mut next = 1u64;
    let mut run_through = |node: &mut ControlNode, last: u64, out: &mut Vec<_>| {
        while next <= last.min(until) {
            if node.is_due(next, step) {
                if let Some(cmd) = node.step(SimTime { ticks: next, step }).command {
                    out.push((next, cmd));
                }
            }
            next += 1;
        }
    };
    let mut bus = Bus::new();
    play(bag, 0.0, &mut bus, |t, delivered| {
        // Ticks up to t only see envelopes stamped before t.
        run_through(node, t, &mut out);
        for env in delivered {
            node.observe(env);
        }
    })?;
    run_through(node, until, &mut out);
    Ok(out)
}
