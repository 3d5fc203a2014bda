//! The authoring service: document upload and analysis, courseware
//! generation, versioned storage and click-to-locate edit sessions.
//!
//! [`Service`] is synchronous and thread-safe; the HTTP layer in [`http`]
//! runs it on blocking threads.

mod cache;
mod edit;
pub mod http;
mod store;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError, PageImage};
use crate::knowledge::{
    build_analysis_prompt, knowledge_from_form, parse_analysis_response, select_theme, ConceptForm,
    DocumentPages, KnowledgeError, ParsedAnalysis, StructuredKnowledge, Theme,
};
use crate::pipeline::{run_pipeline_with, DegradationLevel, GenerationOutcome, PipelineConfig};

pub use cache::{AnalysisCache, Clock, ManualClock, SystemClock};
pub use edit::{
    build_edit_prompt, build_regeneration_prompt, edit_html, error_event, AttemptKind,
    AttemptRecord, CitedElement, EditEvent, EditPolicy, EditRequest, EditSession, EditStatus,
    EditedPage, ElementSelector,
};
pub use store::{Repository, SqliteRepository, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VersionOrigin {
    Generated,
    Edited,
    Regenerated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Version {
    pub number: u32,
    pub html: String,
    /// Hex SHA-256 of `html`.
    pub content_hash: String,
    pub origin: VersionOrigin,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Courseware {
    pub id: String,
    pub knowledge: StructuredKnowledge,
    pub theme: Theme,
    pub degradation_level: DegradationLevel,
    pub versions: Vec<Version>,
    pub current_version: u32,
    pub created_at: DateTime<Utc>,
}

impl Courseware {
    pub fn current(&self) -> &Version {
        self.version(self.current_version)
            .expect("current version exists")
    }

    pub fn version(&self, number: u32) -> Option<&Version> {
        self.versions.iter().find(|v| v.number == number)
    }

    pub fn latest_number(&self) -> u32 {
        self.versions.iter().map(|v| v.number).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredDocument {
    pub id: String,
    pub pages: Vec<PageImage>,
    pub created_at: DateTime<Utc>,
    pub knowledge: Option<StructuredKnowledge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub document_id: String,
    pub knowledge: StructuredKnowledge,
    pub warnings: Vec<String>,
    pub cached: bool,
}

/// Where the knowledge for a new courseware comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationSource {
    Knowledge(StructuredKnowledge),
    DocumentId(String),
    Form(ConceptForm),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratedCourseware {
    pub courseware: Courseware,
    pub outcome: GenerationOutcome,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("document has {count} pages; the limit is 50")]
    PageLimitExceeded { count: usize },
    #[error("document has no pages")]
    EmptyDocument,
    #[error("{kind} {id} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("automatic analysis failed ({reason}); enter the content manually")]
    ManualInputRequired {
        document_id: String,
        page_count: usize,
        reason: String,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    InvalidKnowledge(KnowledgeError),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no element matches the cited xpath, css selector or snippet")]
    SelectorMiss,
    #[error("context_html does not match the current version (expected {expected}, got {found})")]
    StaleContext { expected: String, found: String },
    #[error("edit failed after {attempts} attempts: {reason}")]
    EditFailed { attempts: u32, reason: String },
    #[error(transparent)]
    Storage(#[from] StoreError),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::PageLimitExceeded { .. } => "page_limit_exceeded",
            ServiceError::EmptyDocument => "empty_document",
            ServiceError::NotFound { .. } => "not_found",
            ServiceError::ManualInputRequired { .. } => "manual_input_required",
            ServiceError::Gateway(e) => e.code(),
            ServiceError::InvalidKnowledge(e) => e.code(),
            ServiceError::InvalidRequest(_) => "invalid_request",
            ServiceError::SelectorMiss => "selector_miss",
            ServiceError::StaleContext { .. } => "stale_context",
            ServiceError::EditFailed { .. } => "edit_failed",
            ServiceError::Storage(_) => "storage_failure",
        }
    }
}

impl From<KnowledgeError> for ServiceError {
    fn from(e: KnowledgeError) -> Self {
        match e {
            KnowledgeError::PageLimitExceeded { count } => {
                ServiceError::PageLimitExceeded { count }
            }
            KnowledgeError::EmptyDocument => ServiceError::EmptyDocument,
            other => ServiceError::InvalidKnowledge(other),
        }
    }
}

pub fn content_hash(html: &str) -> String {
    hex::encode(Sha256::digest(html.as_bytes()))
}

fn pages_hash(pages: &[PageImage]) -> String {
    let mut h = Sha256::new();
    for p in pages {
        h.update(p.media_type.as_str().as_bytes());
        h.update((p.bytes.len() as u64).to_le_bytes());
        h.update(&p.bytes);
    }
    hex::encode(h.finalize())
}

pub struct Service {
    repo: Arc<dyn Repository>,
    gateway: Gateway,
    clock: Arc<dyn Clock>,
    cache: AnalysisCache,
    pipeline: PipelineConfig,
    edit_policy: EditPolicy,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl std::fmt::Debug for Service {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Service")
            .field("gateway", &self.gateway)
            .finish_non_exhaustive()
    }
}

pub const ANALYSIS_TTL_HOURS: i64 = 24;

impl Service {
    pub fn new(repo: Arc<dyn Repository>, gateway: Gateway, clock: Arc<dyn Clock>) -> Self {
        Self {
            repo,
            gateway,
            cache: AnalysisCache::new(Duration::hours(ANALYSIS_TTL_HOURS), clock.clone()),
            clock,
            pipeline: PipelineConfig::default(),
            edit_policy: EditPolicy::default(),
            locks: Mutex::new(HashMap::new()),
        }
    }

    /// In-memory store and the system clock.
    pub fn in_memory(gateway: Gateway) -> Result<Self, ServiceError> {
        Ok(Self::new(
            Arc::new(SqliteRepository::in_memory()?),
            gateway,
            Arc::new(SystemClock),
        ))
    }

    pub fn with_pipeline_config(mut self, config: PipelineConfig) -> Self {
        self.pipeline = config;
        self
    }

    pub fn with_edit_policy(mut self, policy: EditPolicy) -> Self {
        self.edit_policy = policy;
        self
    }

    pub fn with_cache_ttl(mut self, ttl: Duration) -> Self {
        self.cache = AnalysisCache::new(ttl, self.clock.clone());
        self
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    fn lock_for(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    pub fn upload_document(&self, pages: Vec<PageImage>) -> Result<String, ServiceError> {
        let pages = DocumentPages::new(pages)?;
        let doc = StoredDocument {
            id: uuid::Uuid::new_v4().to_string(),
            pages: pages.pages().to_vec(),
            created_at: self.clock.now(),
            knowledge: None,
        };
        self.repo.insert_document(&doc)?;
        Ok(doc.id)
    }

    pub fn get_document(&self, id: &str) -> Result<StoredDocument, ServiceError> {
        self.repo
            .get_document(id)?
            .ok_or_else(|| ServiceError::NotFound {
                kind: "document",
                id: id.to_string(),
            })
    }

    pub fn analyze_document(&self, id: &str) -> Result<AnalysisResult, ServiceError> {
        let doc = self.get_document(id)?;
        let key = pages_hash(&doc.pages);
        let (parsed, cached) = match self.cache.get(&key) {
            Some(hit) => (hit, true),
            None => {
                let pages = DocumentPages::new(doc.pages.clone())?;
                let completion = self.gateway.complete(&build_analysis_prompt(&pages))?;
                let parsed: ParsedAnalysis =
                    parse_analysis_response(&completion.text).map_err(|e| match e {
                        KnowledgeError::MalformedJson(_)
                        | KnowledgeError::SchemaViolation { .. } => {
                            ServiceError::ManualInputRequired {
                                document_id: id.to_string(),
                                page_count: doc.pages.len(),
                                reason: e.to_string(),
                            }
                        }
                        other => other.into(),
                    })?;
                self.cache.put(key, parsed.clone());
                (parsed, false)
            }
        };
        self.repo.set_document_knowledge(
            id,
            &serde_json::to_string(&parsed.knowledge).map_err(|e| StoreError(e.to_string()))?,
        )?;
        Ok(AnalysisResult {
            document_id: id.to_string(),
            knowledge: parsed.knowledge,
            warnings: parsed.warnings,
            cached,
        })
    }

    pub fn generate_courseware(
        &self,
        source: GenerationSource,
    ) -> Result<GeneratedCourseware, ServiceError> {
        let knowledge = match source {
            GenerationSource::Knowledge(k) => {
                k.validate()?;
                k
            }
            GenerationSource::Form(form) => knowledge_from_form(&form)?,
            GenerationSource::DocumentId(id) => match self.get_document(&id)?.knowledge {
                Some(k) => k,
                None => self.analyze_document(&id)?.knowledge,
            },
        };
        let outcome = run_pipeline_with(&knowledge, &self.gateway, &self.pipeline);
        let now = self.clock.now();
        let courseware = Courseware {
            id: uuid::Uuid::new_v4().to_string(),
            theme: select_theme(knowledge.subject_area),
            knowledge,
            degradation_level: outcome.level,
            versions: vec![Version {
                number: 1,
                content_hash: content_hash(&outcome.html),
                html: outcome.html.clone(),
                origin: VersionOrigin::Generated,
                created_at: now,
            }],
            current_version: 1,
            created_at: now,
        };
        self.repo.insert_courseware(&courseware)?;
        Ok(GeneratedCourseware {
            courseware,
            outcome,
        })
    }

    /// Stores an existing page as version 1 of a new courseware.
    pub fn import_courseware(
        &self,
        knowledge: StructuredKnowledge,
        html: String,
    ) -> Result<Courseware, ServiceError> {
        let now = self.clock.now();
        let courseware = Courseware {
            id: uuid::Uuid::new_v4().to_string(),
            theme: select_theme(knowledge.subject_area),
            knowledge,
            degradation_level: DegradationLevel::Full,
            versions: vec![Version {
                number: 1,
                content_hash: content_hash(&html),
                html,
                origin: VersionOrigin::Generated,
                created_at: now,
            }],
            current_version: 1,
            created_at: now,
        };
        self.repo.insert_courseware(&courseware)?;
        Ok(courseware)
    }

    pub fn get_courseware(&self, id: &str) -> Result<Courseware, ServiceError> {
        self.repo
            .get_courseware(id)?
            .ok_or_else(|| ServiceError::NotFound {
                kind: "courseware",
                id: id.to_string(),
            })
    }

    pub fn list_coursewares(&self) -> Result<Vec<String>, ServiceError> {
        Ok(self.repo.list_courseware_ids()?)
    }

    pub fn list_versions(&self, id: &str) -> Result<Vec<Version>, ServiceError> {
        Ok(self.get_courseware(id)?.versions)
    }

    pub fn rollback(&self, id: &str, version: u32) -> Result<Courseware, ServiceError> {
        let lock = self.lock_for(id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        let cw = self.get_courseware(id)?;
        if cw.version(version).is_none() {
            return Err(ServiceError::NotFound {
                kind: "version",
                id: format!("{id}@{version}"),
            });
        }
        self.repo.set_current_version(id, version)?;
        self.get_courseware(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MediaType, MockScript, ScriptEntry};

    fn page(tag: u8) -> PageImage {
        PageImage {
            media_type: MediaType::Png,
            bytes: vec![0x89, b'P', b'N', b'G', tag],
        }
    }

    const ANALYSIS: &str = r#"{"main_topics":["Energy","Work","Power"],"key_concepts":["joule"],"learning_objectives":[],
        "prerequisite_knowledge":[],"procedural_concepts":[],"subject_area":"Physics","grade_level":"High"}"#;

    #[test]
    fn upload_bounds_and_no_dedup() {
        let (gw, _) = Gateway::mock(MockScript::default());
        let svc = Service::in_memory(gw).unwrap();
        let a = svc
            .upload_document(vec![page(1), page(2), page(3)])
            .unwrap();
        let b = svc
            .upload_document(vec![page(1), page(2), page(3)])
            .unwrap();
        assert_ne!(a, b);
        assert_eq!(svc.get_document(&a).unwrap().pages[2], page(3));
        assert!(matches!(
            svc.upload_document(vec![page(0); 51]),
            Err(ServiceError::PageLimitExceeded { count: 51 })
        ));
    }

    #[test]
    fn analysis_cache_and_manual_input() {
        let script = MockScript::new(vec![
            ScriptEntry::respond(ANALYSIS),
            ScriptEntry::respond("I cannot read this scan."),
        ]);
        let (gw, mock) = Gateway::mock(script);
        let clock = Arc::new(ManualClock::new(Utc::now()));
        let svc = Service::new(
            Arc::new(SqliteRepository::in_memory().unwrap()),
            gw,
            clock.clone(),
        );
        let id = svc.upload_document(vec![page(1)]).unwrap();
        let first = svc.analyze_document(&id).unwrap();
        assert!(!first.cached);
        let again = svc.analyze_document(&id).unwrap();
        assert!(again.cached);
        assert_eq!(mock.call_count(), 1);
        assert_eq!(
            svc.get_document(&id).unwrap().knowledge,
            Some(first.knowledge)
        );
        clock.advance(Duration::hours(25));
        match svc.analyze_document(&id) {
            Err(ServiceError::ManualInputRequired { page_count, .. }) => assert_eq!(page_count, 1),
            other => panic!("{other:?}"),
        }
        assert_eq!(mock.call_count(), 2);
    }

    #[test]
    fn rollback_keeps_history() {
        let (gw, _) = Gateway::mock(MockScript::default());
        let svc = Service::in_memory(gw).unwrap();
        let k = parse_analysis_response(ANALYSIS).unwrap().knowledge;
        let cw = svc.import_courseware(k, "<p>v1</p>".into()).unwrap();
        svc.repo
            .append_version(
                &cw.id,
                &Version {
                    number: 2,
                    html: "<p>v2</p>".into(),
                    content_hash: content_hash("<p>v2</p>"),
                    origin: VersionOrigin::Edited,
                    created_at: Utc::now(),
                },
            )
            .unwrap();
        let back = svc.rollback(&cw.id, 1).unwrap();
        assert_eq!(back.current_version, 1);
        assert_eq!(back.versions.len(), 2);
        assert!(matches!(
            svc.rollback(&cw.id, 9),
            Err(ServiceError::NotFound { .. })
        ));
        assert!(matches!(
            svc.get_courseware("nope"),
            Err(ServiceError::NotFound { .. })
        ));
    }

    #[test]
    fn versions_cannot_be_rewritten() {
        let repo = SqliteRepository::in_memory().unwrap();
        let (gw, _) = Gateway::mock(MockScript::default());
        let svc = Service::new(Arc::new(repo), gw, Arc::new(SystemClock));
        let k = parse_analysis_response(ANALYSIS).unwrap().knowledge;
        let cw = svc.import_courseware(k, "<p>v1</p>".into()).unwrap();
        let dup = Version {
            number: 1,
            html: "<p>other</p>".into(),
            content_hash: content_hash("<p>other</p>"),
            origin: VersionOrigin::Edited,
            created_at: Utc::now(),
        };
        assert!(svc.repo.append_version(&cw.id, &dup).is_err());
        assert_eq!(
            svc.get_courseware(&cw.id).unwrap().current().html,
            "<p>v1</p>"
        );
    }
}
