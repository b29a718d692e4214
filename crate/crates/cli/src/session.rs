//! Think-aloud collection sessions: turn-taking between game actions and
//! rationales, redo of repeated actions, and review edits.

use std::time::{SystemTime, UNIX_EPOCH};

use rationale_core::corpus::CorpusRecord;
use rationale_core::env::{new_game, render_ascii, step, Action, EnvConfig, GameState, StepOutcome};
use rationale_core::serialize::{serialize_full, Snapshot, SymbolAlphabet};
use serde::{Deserialize, Serialize};

/// Seconds the client should pause for a rationale after each action.
pub const PAUSE_SECONDS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Tutorial,
    Collecting,
    Review,
    Done,
}

impl Phase {
    pub fn next(self) -> Option<Phase> {
        match self {
            Phase::Tutorial => Some(Phase::Collecting),
            Phase::Collecting => Some(Phase::Review),
            Phase::Review => Some(Phase::Done),
            Phase::Done => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    BadRequest(String),
}

type Result<T> = std::result::Result<T, SessionError>;

/// Board as sent to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub grid: String,
    pub width: usize,
    pub height: usize,
    pub frog: [usize; 2],
    pub lives: u32,
    pub tick: u64,
    pub status: String,
    pub board: String,
}

impl StateView {
    pub fn of(state: &GameState) -> Self {
        let alphabet = SymbolAlphabet::default();
        StateView {
            grid: serialize_full(&Snapshot::from_state(state), &alphabet).into_iter().collect(),
            width: state.width(),
            height: state.height(),
            frog: [state.frog.col, state.frog.row],
            lives: state.lives,
            tick: state.tick,
            status: format!("{:?}", state.status).to_lowercase(),
            board: render_ascii(state),
        }
    }
}

#[derive(Debug, Clone)]
struct Pending {
    action: Action,
    /// State the action was taken from; the record stores this.
    before: GameState,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub participant: Option<String>,
    pub phase: Phase,
    env: EnvConfig,
    games_started: u64,
    state: GameState,
    pending: Option<Pending>,
    records: Vec<CorpusRecord>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl Session {
    pub fn new(id: impl Into<String>, env: &EnvConfig, participant: Option<String>) -> Self {
        let state = new_game(env).expect("environment validated by the service");
        Session {
            id: id.into(),
            participant,
            phase: Phase::Tutorial,
            env: env.clone(),
            games_started: 1,
            state,
            pending: None,
            records: Vec::new(),
        }
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn pending_action(&self) -> Option<Action> {
        self.pending.as_ref().map(|p| p.action)
    }

    pub fn records(&self) -> &[CorpusRecord] {
        &self.records
    }

    pub fn advance(&mut self, to: Phase) -> Result<Phase> {
        if self.phase.next() != Some(to) {
            return Err(SessionError::Conflict(format!("cannot move from {:?} to {to:?}", self.phase)));
        }
        if self.pending.is_some() {
            return Err(SessionError::Conflict("a rationale is still pending".into()));
        }
        self.phase = to;
        Ok(to)
    }

    pub fn act(&mut self, action: Action) -> Result<StepOutcome> {
        if self.phase != Phase::Collecting {
            return Err(SessionError::Conflict(format!("actions are only accepted while collecting, not in {:?}", self.phase)));
        }
        if self.pending.is_some() {
            return Err(SessionError::Conflict("explain the previous action before taking another".into()));
        }
        let (next, outcome) = step(&self.state, action).map_err(|e| SessionError::Conflict(e.to_string()))?;
        self.pending = Some(Pending { action, before: std::mem::replace(&mut self.state, next) });
        Ok(outcome)
    }

    fn commit(&mut self, text: String, redo_of: Option<String>) -> CorpusRecord {
        let pending = self.pending.take().expect("caller checked pending");
        let mut record = CorpusRecord::from_state(
            format!("{}-{:04}", self.id, self.records.len() + 1),
            &pending.before,
            pending.action,
            text,
        );
        record.participant = self.participant.clone();
        record.redo_of = redo_of;
        record.ts = now_ms();
        self.records.push(record.clone());
        if self.state.is_terminal() {
            self.state = new_game(&self.env.with_seed(self.env.seed + self.games_started)).expect("validated environment");
            self.games_started += 1;
        }
        record
    }

    pub fn rationale(&mut self, text: &str) -> Result<CorpusRecord> {
        if self.pending.is_none() {
            return Err(SessionError::Conflict("no action is waiting for a rationale".into()));
        }
        let text = text.trim();
        if text.is_empty() {
            return Err(SessionError::BadRequest("rationale text is empty".into()));
        }
        Ok(self.commit(text.to_string(), None))
    }

    /// Reuses the previous rationale when the pending action repeats the
    /// previous record's action.
    pub fn redo(&mut self) -> Result<CorpusRecord> {
        let Some(pending) = &self.pending else {
            return Err(SessionError::Conflict("no action is waiting for a rationale".into()));
        };
        let Some(prev) = self.records.last() else {
            return Err(SessionError::Conflict("there is no previous rationale to reuse".into()));
        };
        if prev.action != pending.action {
            return Err(SessionError::Conflict(format!(
                "redo needs a repeated action: previous {}, pending {}",
                prev.action, pending.action
            )));
        }
        let (text, id) = (prev.rationale.clone(), prev.id.clone());
        Ok(self.commit(text, Some(id)))
    }

    pub fn edit(&mut self, record_id: &str, text: &str) -> Result<CorpusRecord> {
        let text = text.trim();
        if text.is_empty() {
            return Err(SessionError::BadRequest("rationale text is empty".into()));
        }
        let r = self
            .records
            .iter_mut()
            .find(|r| r.id == record_id)
            .ok_or_else(|| SessionError::NotFound(format!("record {record_id}")))?;
        r.rationale = text.to_string();
        r.edited = true;
        Ok(r.clone())
    }

    pub fn export(&self) -> String {
        rationale_core::corpus::to_jsonl(&self.records).expect("records always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rationale_core::corpus::parse_jsonl;

    fn collecting() -> Session {
        let mut s = Session::new("t", &EnvConfig::default(), Some("p1".into()));
        s.advance(Phase::Collecting).unwrap();
        s
    }

    #[test]
    fn phases_only_move_forward_one_step() {
        let mut s = Session::new("t", &EnvConfig::default(), None);
        assert!(matches!(s.advance(Phase::Review), Err(SessionError::Conflict(_))));
        s.advance(Phase::Collecting).unwrap();
        assert!(matches!(s.advance(Phase::Tutorial), Err(SessionError::Conflict(_))));
        s.advance(Phase::Review).unwrap();
        s.advance(Phase::Done).unwrap();
        assert!(s.advance(Phase::Done).is_err());
    }

    #[test]
    fn actions_need_collecting_phase_and_no_pending() {
        let mut s = Session::new("t", &EnvConfig::default(), None);
        assert!(matches!(s.act(Action::Up), Err(SessionError::Conflict(_))));
        s.advance(Phase::Collecting).unwrap();
        s.act(Action::Left).unwrap();
        assert!(matches!(s.act(Action::Left), Err(SessionError::Conflict(_))));
        assert!(matches!(s.advance(Phase::Review), Err(SessionError::Conflict(_))));
        assert!(matches!(s.rationale("  "), Err(SessionError::BadRequest(_))));
        s.rationale("going left").unwrap();
        s.act(Action::Left).unwrap();
    }

    #[test]
    fn record_holds_pre_action_state() {
        let mut s = collecting();
        let before = s.state().clone();
        s.act(Action::Left).unwrap();
        let r = s.rationale("left").unwrap();
        assert_eq!(r.frog, [before.frog.col, before.frog.row]);
        assert_eq!(r.tick, 0);
        assert_eq!(r.action, Action::Left);
        assert_eq!(r.participant.as_deref(), Some("p1"));
    }

    #[test]
    fn redo_copies_previous_rationale_for_repeated_action() {
        let mut s = collecting();
        assert!(matches!(s.redo(), Err(SessionError::Conflict(_))));
        s.act(Action::Left).unwrap();
        assert!(matches!(s.redo(), Err(SessionError::Conflict(_))));
        let first = s.rationale("dodging left").unwrap();
        s.act(Action::Right).unwrap();
        assert!(matches!(s.redo(), Err(SessionError::Conflict(_))));
        s.rationale("back right").unwrap();
        s.act(Action::Right).unwrap();
        let again = s.redo().unwrap();
        assert_eq!(again.rationale, "back right");
        assert_eq!(again.redo_of.as_deref(), Some("t-0002"));
        assert_ne!(first.id, again.id);
    }

    #[test]
    fn edit_and_export() {
        let mut s = collecting();
        s.act(Action::Up).unwrap();
        s.rationale("up we go").unwrap();
        s.advance(Phase::Review).unwrap();
        assert!(matches!(s.edit("nope", "x"), Err(SessionError::NotFound(_))));
        assert!(matches!(s.edit("t-0001", ""), Err(SessionError::BadRequest(_))));
        let r = s.edit("t-0001", "moving up to the median").unwrap();
        assert!(r.edited);
        s.advance(Phase::Done).unwrap();
        s.edit("t-0001", "final text").unwrap();
        let back = parse_jsonl(&s.export(), "export").unwrap();
        assert_eq!(back, s.records());
        assert_eq!(back[0].rationale, "final text");
    }

    #[test]
    fn finished_game_restarts_after_its_rationale() {
        let mut s = collecting();
        // Down from the start row is blocked, so walk until something ends the game.
        let mut guard = 0;
        loop {
            let o = s.act(Action::Up).unwrap();
            s.rationale("up").unwrap();
            guard += 1;
            if o.terminal || guard > 500 {
                break;
            }
        }
        assert!(guard <= 500);
        assert!(!s.state().is_terminal());
        assert_eq!(s.state().tick, 0);
        s.act(Action::Up).unwrap();
    }
}
