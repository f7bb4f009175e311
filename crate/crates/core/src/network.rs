//! Synchronous in-memory communication bus.
//!
//! Followers learn their neighbors' state estimates only through this bus:
//! every round each agent posts one outgoing message, and the bus delivers
//! it to all graph neighbors, optionally delayed by a fixed number of rounds
//! (FIFO per link). There is no other channel between agents, which keeps
//! information flow local to the graph topology.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::graph::FormationGraph;

/// One agent's broadcast for one round.
#[derive(Debug, Clone)]
pub struct EstimateMessage {
    /// Sending agent, 0-based.
    pub sender: usize,
    /// Time the message was posted.
    pub t: f64,
    /// Sender's position estimate.
    pub p_hat: DVector<f64>,
    /// Sender's velocity estimate.
    pub v_hat: DVector<f64>,
    /// Acceleration the sender is currently applying.
    pub u: DVector<f64>,
    /// Relative-position estimates of edge observers the sender runs, as
    /// (edge index, estimated p̄_k) pairs.
    pub edge_estimates: Vec<(usize, DVector<f64>)>,
}

/// Messages delivered to every agent for one round.
#[derive(Debug, Clone)]
pub struct Round {
    pub t: f64,
    /// mailbox[i] holds the messages agent i received, in neighbor order.
    mailbox: Vec<Vec<EstimateMessage>>,
}

impl Round {
    /// All messages delivered to agent `receiver`.
    pub fn inbox(&self, receiver: usize) -> &[EstimateMessage] {
        &self.mailbox[receiver]
    }

    /// The message agent `receiver` got from `sender` this round.
    pub fn from(&self, receiver: usize, sender: usize) -> Result<&EstimateMessage> {
        self.mailbox[receiver]
            .iter()
            .find(|m| m.sender == sender)
            .ok_or(Error::MissingMessage {
                receiver: receiver + 1,
                sender: sender + 1,
            })
    }
}

/// Synchronous bus with a fixed per-link delay measured in rounds.
///
/// With delay 0 every round delivers the messages posted that same round.
/// With delay q ≥ 1 each link holds a FIFO queue; the queues are pre-filled
/// with q copies of the agents' initial messages so the first rounds deliver
/// well-defined (stale) data instead of nothing.
#[derive(Debug, Clone)]
pub struct Bus {
    delay: usize,
    /// queue[i] holds agent i's pending outgoing messages, oldest first.
    queue: Vec<Vec<EstimateMessage>>,
}

impl Bus {
    /// A zero-delay bus for `n` agents.
    pub fn new(n: usize) -> Self {
        Self::with_delay(n, 0, &[])
    }

    /// A bus delaying every link by `delay` rounds, pre-seeded so that the
    /// first `delay` exchanges replay `initial` (one message per agent).
    pub fn with_delay(n: usize, delay: usize, initial: &[EstimateMessage]) -> Self {
        let queue = (0..n)
            .map(|i| {
                (0..delay)
                    .map(|_| {
                        initial
                            .iter()
                            .find(|m| m.sender == i)
                            .cloned()
                            .unwrap_or_else(|| EstimateMessage {
                                sender: i,
                                t: 0.0,
                                p_hat: DVector::zeros(0),
                                v_hat: DVector::zeros(0),
                                u: DVector::zeros(0),
                                edge_estimates: Vec::new(),
                            })
                    })
                    .collect()
            })
            .collect();
        Self { delay, queue }
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    /// Post one message per agent and deliver whatever each link's queue
    /// releases this round to all graph neighbors.
    pub fn exchange(
        &mut self,
        g: &FormationGraph,
        outgoing: Vec<EstimateMessage>,
        t: f64,
    ) -> Result<Round> {
        if outgoing.len() != g.n() {
            return Err(Error::Validation(format!(
                "expected one outgoing message per agent ({} agents, {} messages)",
                g.n(),
                outgoing.len()
            )));
        }
        for (i, m) in outgoing.iter().enumerate() {
            if m.sender != i {
                return Err(Error::Validation(format!(
                    "outgoing message {i} claims sender {}",
                    m.sender
                )));
            }
        }
        let released: Vec<EstimateMessage> = if self.delay == 0 {
            outgoing
        } else {
            let mut released = Vec::with_capacity(g.n());
            for (i, m) in outgoing.into_iter().enumerate() {
                self.queue[i].push(m);
                released.push(self.queue[i].remove(0));
            }
            released
        };
        let mailbox = (0..g.n())
            .map(|i| {
                g.neighbors(i)
                    .iter()
                    .map(|&j| released[j].clone())
                    .collect()
            })
            .collect();
        Ok(Round { t, mailbox })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::four_agent_cycle;

    fn message(sender: usize, t: f64) -> EstimateMessage {
        EstimateMessage {
            sender,
            t,
            p_hat: DVector::from_element(2, sender as f64),
            v_hat: DVector::zeros(2),
            u: DVector::zeros(2),
            edge_estimates: Vec::new(),
        }
    }

    fn post_all(n: usize, t: f64) -> Vec<EstimateMessage> {
        (0..n).map(|i| message(i, t)).collect()
    }

    #[test]
    fn cycle_inboxes_hold_exactly_the_neighbors() {
        let g = four_agent_cycle(2);
        let mut bus = Bus::new(4);
        let round = bus.exchange(&g, post_all(4, 0.0), 0.0).unwrap();
        let senders: Vec<usize> = round.inbox(0).iter().map(|m| m.sender).collect();
        assert_eq!(senders, vec![1, 3]);
        for i in 0..4 {
            assert_eq!(round.inbox(i).len(), 2);
        }
        assert_eq!(round.from(0, 1).unwrap().sender, 1);
        assert!(matches!(
            round.from(0, 2),
            Err(Error::MissingMessage {
                receiver: 1,
                sender: 3
            })
        ));
    }

    #[test]
    fn complete_graph_inboxes_hold_all_others() {
        let g = FormationGraph::from_one_based(3, 2, &[(1, 2), (1, 3), (2, 3)]).unwrap();
        let mut bus = Bus::new(3);
        let round = bus.exchange(&g, post_all(3, 0.0), 0.0).unwrap();
        for i in 0..3 {
            assert_eq!(round.inbox(i).len(), 2);
            for j in 0..3 {
                if j != i {
                    assert_eq!(round.from(i, j).unwrap().sender, j);
                }
            }
        }
    }

    #[test]
    fn delayed_bus_delivers_messages_stamped_two_rounds_back() {
        let g = four_agent_cycle(2);
        let initial = post_all(4, -1.0);
        let mut bus = Bus::with_delay(4, 2, &initial);
        // Rounds 0 and 1 replay the seeded initial messages.
        for r in 0..2 {
            let round = bus.exchange(&g, post_all(4, r as f64), r as f64).unwrap();
            assert_eq!(round.from(0, 1).unwrap().t, -1.0);
        }
        // From round 2 on, the inbox lags the post by exactly two rounds.
        for r in 2..6 {
            let round = bus.exchange(&g, post_all(4, r as f64), r as f64).unwrap();
            assert_eq!(round.from(0, 1).unwrap().t, (r - 2) as f64);
        }
    }

    #[test]
    fn wrong_message_count_is_rejected() {
        let g = four_agent_cycle(2);
        let mut bus = Bus::new(4);
        assert!(matches!(
            bus.exchange(&g, post_all(3, 0.0), 0.0),
            Err(Error::Validation(_))
        ));
    }
}
