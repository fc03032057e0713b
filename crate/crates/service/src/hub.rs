use std::sync::Mutex;

use tokio::sync::broadcast;

use affect_core::acquisition::QualitySnapshot;
use affect_core::realtime::{SessionEvent, SessionSnapshot, SessionState, WindowPrediction};

/// Fan-out of one session's events. Publishing and subscribing share a lock,
/// so a subscriber's snapshot plus the deltas after it contain every event
/// exactly once, in emission order.
pub struct Hub {
    inner: Mutex<Current>,
    tx: broadcast::Sender<SessionEvent>,
}

struct Current {
    state: SessionState,
    quality: Option<QualitySnapshot>,
    predictions: Vec<WindowPrediction>,
}

impl Hub {
    pub fn new(state: SessionState, predictions: Vec<WindowPrediction>, capacity: usize) -> Self {
        let (tx, _) = broadcast::channel(capacity.max(16));
        Hub {
            inner: Mutex::new(Current { state, quality: None, predictions }),
            tx,
        }
    }

    pub fn publish(&self, event: SessionEvent) {
        let mut current = self.inner.lock().expect("hub lock");
        match &event {
            SessionEvent::State(change) => current.state = change.state,
            SessionEvent::Quality(q) => current.quality = Some(q.channels),
            SessionEvent::Prediction(p) => current.predictions.push(*p),
            SessionEvent::Frames(_) | SessionEvent::Snapshot(_) => {}
        }
        // No receivers is not an error.
        let _ = self.tx.send(event);
    }

    pub fn subscribe(&self) -> (SessionSnapshot, broadcast::Receiver<SessionEvent>) {
        let current = self.inner.lock().expect("hub lock");
        (Self::snapshot_of(&current), self.tx.subscribe())
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        Self::snapshot_of(&self.inner.lock().expect("hub lock"))
    }

    pub fn state(&self) -> SessionState {
        self.inner.lock().expect("hub lock").state
    }

    pub fn prediction_count(&self) -> usize {
        self.inner.lock().expect("hub lock").predictions.len()
    }

    fn snapshot_of(current: &Current) -> SessionSnapshot {
        SessionSnapshot {
            state: current.state,
            quality: current.quality,
            predictions: current.predictions.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use affect_core::realtime::StateChange;
    use affect_core::EmotionLabel;

    fn prediction(k: usize) -> SessionEvent {
        SessionEvent::Prediction(WindowPrediction {
            window_index: k,
            t_end_s: 30.0 + 10.0 * k as f64,
            label: EmotionLabel::Happy,
            confidence: 1.0,
            sample_count: 330,
        })
    }

    #[test]
    fn snapshot_then_deltas_covers_every_event_once() {
        let hub = Hub::new(SessionState::Idle, Vec::new(), 64);
        hub.publish(SessionEvent::State(StateChange { state: SessionState::Running, t_s: 0.0 }));
        hub.publish(prediction(1));
        let (snap, mut rx) = hub.subscribe();
        hub.publish(prediction(2));
        assert_eq!(snap.state, SessionState::Running);
        assert_eq!(snap.predictions.len(), 1);
        assert_eq!(rx.try_recv().unwrap(), prediction(2));
        assert!(rx.try_recv().is_err());
        assert_eq!(hub.prediction_count(), 2);
    }
}
