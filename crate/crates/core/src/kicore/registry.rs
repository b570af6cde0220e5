use std::fmt;
use std::sync::Arc;

use super::distribution::{topk_truncate, SparseDistribution};
use crate::corpus::{MaskedBatch, Objective};
use crate::error::{KiError, Result};
use crate::logitcache::LogitCache;
use crate::model::{site_logits, temperature_softmax, Mode, ModelConfig, Params};

pub const WILDCARD: &str = "*";

/// A teacher evaluated on the fly. Used when a cache would be impractically
/// large (K close to V) or for quick experiments.
#[derive(Debug, Clone)]
pub struct LiveTeacher {
    pub params: Params<f32>,
    pub config: ModelConfig,
    pub tau: f64,
    pub k: usize,
    /// Hex checkpoint hash identifying the teacher.
    pub hash: String,
}

impl LiveTeacher {
    pub fn new(params: Params<f32>, config: ModelConfig, tau: f64, k: usize) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(KiError::InvalidTemperature(tau));
        }
        if k < 1 {
            return Err(KiError::InvalidK(k));
        }
        params.check_layout(&config)?;
        let hash = crate::model::checkpoint_hash(&params, &config);
        Ok(LiveTeacher {
            params,
            config,
            tau,
            k,
            hash,
        })
    }
}

#[derive(Debug, Clone)]
pub enum TeacherHandle {
    Cache(Arc<LogitCache>),
    Live(Arc<LiveTeacher>),
}

impl TeacherHandle {
    pub fn live(teacher: LiveTeacher) -> Self {
        TeacherHandle::Live(Arc::new(teacher))
    }

    pub fn cache(cache: LogitCache) -> Self {
        TeacherHandle::Cache(Arc::new(cache))
    }

    /// Teacher checkpoint hash (hex).
    pub fn id(&self) -> String {
        match self {
            TeacherHandle::Cache(c) => c.teacher_hash_hex(),
            TeacherHandle::Live(t) => t.hash.clone(),
        }
    }

    pub fn tau(&self) -> f64 {
        match self {
            TeacherHandle::Cache(c) => c.tau as f64,
            TeacherHandle::Live(t) => t.tau,
        }
    }

    pub fn vocab_size(&self) -> usize {
        match self {
            TeacherHandle::Cache(c) => c.vocab_size as usize,
            TeacherHandle::Live(t) => t.config.vocab_size,
        }
    }

    pub fn objective(&self) -> Objective {
        match self {
            TeacherHandle::Cache(c) => c.objective,
            TeacherHandle::Live(t) => t.config.objective,
        }
    }

    /// Teacher distributions for every loss position of `examples`, flattened
    /// in batch order (example, then ascending position).
    pub fn targets(&self, batch: &MaskedBatch, examples: &[usize]) -> Result<Vec<SparseDistribution>> {
        match self {
            TeacherHandle::Cache(c) => {
                let mut out = Vec::new();
                for &b in examples {
                    for &p in &batch.loss_positions[b] {
                        out.push(c.lookup(batch.seq_ids[b], p)?);
                    }
                }
                Ok(out)
            }
            TeacherHandle::Live(t) => {
                let sub = batch.select(examples);
                if sub.num_loss_positions() == 0 {
                    return Ok(Vec::new());
                }
                let v = t.config.vocab_size;
                let z = site_logits(&t.params, &t.config, &sub, Mode::Eval)?;
                z.chunks(v)
                    .map(|row| topk_truncate(&temperature_softmax(row, t.tau)?, t.k))
                    .collect()
            }
        }
    }
}

pub type RouteObserver = Arc<dyn Fn(&str, &TeacherHandle) + Send + Sync>;

/// Domain tag (or `*`) to teacher mapping.
#[derive(Clone, Default)]
pub struct TeacherRegistry {
    entries: Vec<(String, TeacherHandle)>,
    observer: Option<RouteObserver>,
}

impl fmt::Debug for TeacherRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TeacherRegistry")
            .field(
                "entries",
                &self.entries.iter().map(|(t, h)| (t.as_str(), h.id())).collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl TeacherRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry routing every domain to `handle`.
    pub fn single(handle: TeacherHandle) -> Self {
        TeacherRegistry {
            entries: vec![(WILDCARD.to_string(), handle)],
            observer: None,
        }
    }

    pub fn insert(&mut self, tag: impl Into<String>, handle: TeacherHandle) -> Result<()> {
        let tag = tag.into();
        if tag.is_empty() {
            return Err(KiError::Config("empty teacher domain tag".into()));
        }
        if self.entries.iter().any(|(t, _)| *t == tag) {
            return Err(KiError::Config(format!("teacher tag '{tag}' registered twice")));
        }
        self.entries.push((tag, handle));
        Ok(())
    }

    pub fn with(mut self, tag: impl Into<String>, handle: TeacherHandle) -> Result<Self> {
        self.insert(tag, handle)?;
        Ok(self)
    }

    /// Called with `(domain_tag, chosen_handle)` on every successful route.
    pub fn set_observer(&mut self, observer: RouteObserver) {
        self.observer = Some(observer);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &TeacherHandle)> {
        self.entries.iter().map(|(t, h)| (t.as_str(), h))
    }
}

/// Exact tag match, else the wildcard entry.
pub fn route_teacher<'a>(domain_tag: &str, registry: &'a TeacherRegistry) -> Result<&'a TeacherHandle> {
    let hit = registry
        .entries
        .iter()
        .find(|(t, _)| t == domain_tag)
        .or_else(|| registry.entries.iter().find(|(t, _)| t == WILDCARD))
        .map(|(_, h)| h)
        .ok_or_else(|| KiError::NoTeacherForDomain(domain_tag.to_string()))?;
    if let Some(obs) = &registry.observer {
        obs(domain_tag, hit);
    }
    Ok(hit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn teacher(seed: u64) -> TeacherHandle {
        let cfg = ModelConfig::shape(Objective::Mlm, 1, 8, 2, 16, 12, 8);
        let p = Params::init(&cfg, seed).unwrap();
        TeacherHandle::live(LiveTeacher::new(p, cfg, 2.0, 3).unwrap())
    }

    #[test]
    fn routing() {
        let (t1, t2, t0) = (teacher(1), teacher(2), teacher(3));
        let reg = TeacherRegistry::new()
            .with("cs", t1.clone())
            .unwrap()
            .with("bio", t2.clone())
            .unwrap();
        assert_eq!(route_teacher("cs", &reg).unwrap().id(), t1.id());
        assert_eq!(route_teacher("bio", &reg).unwrap().id(), t2.id());
        assert!(matches!(
            route_teacher("news", &reg),
            Err(KiError::NoTeacherForDomain(_))
        ));
        let wild = TeacherRegistry::single(t0.clone());
        assert_eq!(route_teacher("anything", &wild).unwrap().id(), t0.id());
        let both = reg.with(WILDCARD, t0.clone()).unwrap();
        assert_eq!(route_teacher("cs", &both).unwrap().id(), t1.id());
        assert_eq!(route_teacher("news", &both).unwrap().id(), t0.id());
    }

    #[test]
    fn duplicate_tags_rejected() {
        let mut reg = TeacherRegistry::single(teacher(1));
        assert!(reg.insert(WILDCARD, teacher(2)).is_err());
        assert!(reg.insert("cs", teacher(2)).is_ok());
        assert!(reg.insert("cs", teacher(3)).is_err());
    }

    #[test]
    fn observer_sees_routes() {
        use std::sync::Mutex;
        let seen = Arc::new(Mutex::new(Vec::new()));
        let mut reg = TeacherRegistry::single(teacher(1));
        let s = seen.clone();
        reg.set_observer(Arc::new(move |tag, h| s.lock().unwrap().push((tag.to_string(), h.id()))));
        route_teacher("x", &reg).unwrap();
        route_teacher("y", &reg).unwrap();
        assert_eq!(seen.lock().unwrap().len(), 2);
    }
}
