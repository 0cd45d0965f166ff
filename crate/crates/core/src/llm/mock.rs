use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::{Completion, CompletionBackend, CompletionRequest, LlmError};
use crate::dataset::Record;

pub type Classifier = Arc<dyn Fn(&Record) -> bool + Send + Sync>;

/// Seedless, deterministic stand-ins for a language model.
#[derive(Clone)]
pub enum MockMode {
    /// Always answer with this text.
    Fixed(String),
    /// Majority answer among the demonstrations; ties and zero-shot give "Yes".
    EchoMajority,
    /// Apply a classifier to the query record.
    Oracle(Classifier),
}

impl fmt::Debug for MockMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MockMode::Fixed(a) => write!(f, "Fixed({a:?})"),
            MockMode::EchoMajority => f.write_str("EchoMajority"),
            MockMode::Oracle(_) => f.write_str("Oracle(<fn>)"),
        }
    }
}

/// Mock backend with call-count instrumentation.
#[derive(Debug)]
pub struct MockBackend {
    mode: MockMode,
    id: String,
    calls: AtomicUsize,
    demo_sets: Mutex<HashSet<u64>>,
}

impl MockBackend {
    pub fn new(mode: MockMode) -> Self {
        let id = match &mode {
            MockMode::Fixed(a) => format!("mock:fixed({a})"),
            MockMode::EchoMajority => "mock:echo-majority".into(),
            MockMode::Oracle(_) => "mock:oracle".into(),
        };
        MockBackend {
            mode,
            id,
            calls: AtomicUsize::new(0),
            demo_sets: Mutex::new(HashSet::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Number of distinct demonstration sets seen across all calls.
    pub fn distinct_demo_sets(&self) -> usize {
        self.demo_sets.lock().expect("mock lock").len()
    }
}

impl CompletionBackend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: CompletionRequest<'_>) -> Result<Completion, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let demos = request.prompt.demonstrations();
        let mut h = DefaultHasher::new();
        demos.hash_into(&mut h);
        self.demo_sets.lock().expect("mock lock").insert(h.finish());

        let text = match &self.mode {
            MockMode::Fixed(a) => a.clone(),
            MockMode::EchoMajority => {
                let yes = demos.iter().filter(|d| d.is_positive()).count();
                if 2 * yes >= demos.len() { "Yes" } else { "No" }.to_string()
            }
            MockMode::Oracle(f) => {
                let record = request
                    .query
                    .ok_or_else(|| LlmError::Malformed("oracle mock needs the query record".into()))?;
                if f(record) { "Yes" } else { "No" }.to_string()
            }
        };
        Ok(Completion {
            text,
            latency: Duration::ZERO,
            backend: self.id.clone(),
        })
    }
}

impl crate::prompt::DemonstrationSet {
    fn hash_into<H: Hasher>(&self, h: &mut H) {
        for d in self.iter() {
            d.question.hash(h);
            d.answer.hash(h);
        }
    }
}
