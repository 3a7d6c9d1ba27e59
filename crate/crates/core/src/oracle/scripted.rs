//! Canned-response backend for tests.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::lm::{CallPurpose, Capabilities, LmBackend, LmError, LmRequest, LmResponse};

/// What to do once a script runs out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exhaustion {
    /// Return [`LmError::ScriptExhausted`].
    Strict,
    /// Keep returning the last reply.
    RepeatLast,
}

#[derive(Debug)]
enum Script {
    Sequence(Vec<String>),
    ByPurpose(HashMap<CallPurpose, Vec<String>>),
}

#[derive(Debug, Default)]
struct State {
    requests: Vec<LmRequest>,
    cursor: HashMap<Option<CallPurpose>, usize>,
}

/// Replies from a fixed script, either one global sequence or one sequence per
/// call purpose, and records every request it receives.
#[derive(Debug)]
pub struct ScriptedBackend {
    script: Script,
    exhaustion: Exhaustion,
    state: Mutex<State>,
}

impl ScriptedBackend {
    pub fn sequence<S: Into<String>>(replies: impl IntoIterator<Item = S>, exhaustion: Exhaustion) -> Self {
        ScriptedBackend {
            script: Script::Sequence(replies.into_iter().map(Into::into).collect()),
            exhaustion,
            state: Mutex::default(),
        }
    }

    pub fn by_purpose<S: Into<String>>(
        table: impl IntoIterator<Item = (CallPurpose, Vec<S>)>,
        exhaustion: Exhaustion,
    ) -> Self {
        let table = table.into_iter().map(|(p, replies)| (p, replies.into_iter().map(Into::into).collect())).collect();
        ScriptedBackend { script: Script::ByPurpose(table), exhaustion, state: Mutex::default() }
    }

    pub fn requests(&self) -> Vec<LmRequest> {
        self.state.lock().expect("scripted backend poisoned").requests.clone()
    }

    pub fn call_count(&self) -> usize {
        self.state.lock().expect("scripted backend poisoned").requests.len()
    }

    pub fn calls_for(&self, purpose: CallPurpose) -> usize {
        let state = self.state.lock().expect("scripted backend poisoned");
        state.requests.iter().filter(|r| r.purpose == purpose).count()
    }
}

impl LmBackend for ScriptedBackend {
    fn complete(&self, request: &LmRequest) -> Result<LmResponse, LmError> {
        let mut state = self.state.lock().expect("scripted backend poisoned");
        state.requests.push(request.clone());
        let calls = state.requests.len();
        let (key, replies) = match &self.script {
            Script::Sequence(r) => (None, r.as_slice()),
            Script::ByPurpose(t) => (Some(request.purpose), t.get(&request.purpose).map_or(&[][..], Vec::as_slice)),
        };
        let cursor = state.cursor.entry(key).or_insert(0);
        let reply = match replies.get(*cursor) {
            Some(r) => r,
            None => match (self.exhaustion, replies.last()) {
                (Exhaustion::RepeatLast, Some(r)) => r,
                _ => return Err(LmError::ScriptExhausted(calls)),
            },
        };
        *cursor += 1;
        Ok(LmResponse::text(reply.clone()))
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { deterministic: true, live: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{LmParams, Message};

    fn req(purpose: CallPurpose) -> LmRequest {
        LmRequest::new(purpose, "s", vec![Message::user("u")], LmParams::OFFLINE).unwrap()
    }

    #[test]
    fn strict_sequence_errors_when_exhausted() {
        let b = ScriptedBackend::sequence(["a", "b"], Exhaustion::Strict);
        assert_eq!(b.complete(&req(CallPurpose::Agent)).unwrap().text, "a");
        assert_eq!(b.complete(&req(CallPurpose::Reflect)).unwrap().text, "b");
        assert!(matches!(b.complete(&req(CallPurpose::Agent)), Err(LmError::ScriptExhausted(3))));
        assert_eq!(b.call_count(), 3);
        assert_eq!(b.calls_for(CallPurpose::Agent), 2);
    }

    #[test]
    fn per_purpose_scripts_repeat_last() {
        let b = ScriptedBackend::by_purpose(
            [(CallPurpose::Agent, vec!["x", "y"]), (CallPurpose::Summarize, vec!["s"])],
            Exhaustion::RepeatLast,
        );
        let texts: Vec<String> = [CallPurpose::Agent, CallPurpose::Summarize, CallPurpose::Agent, CallPurpose::Agent]
            .into_iter()
            .map(|p| b.complete(&req(p)).unwrap().text)
            .collect();
        assert_eq!(texts, ["x", "s", "y", "y"]);
        assert!(b.complete(&req(CallPurpose::Reflect)).is_err());
        assert_eq!(b.requests().len(), 5);
    }
}
