//! Dataset and job registry with on-disk persistence under the data directory:
//!
//! ```text
//! <data>/datasets/<sha256>/{monitoring.csv, wells.csv, overlays.json}
//! <data>/analyses/<job id>/{job.json, analysis.json, models/, ...}
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use aquitrend::analysis::{Analysis, AnalysisError, AnalysisOptions};
use aquitrend::dataset::{Dataset, DatasetError, DatasetOptions, Diagnostic, RawTables};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::Semaphore;

use crate::error::ApiError;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Concurrent fitting jobs.
    pub workers: usize,
    pub max_upload_bytes: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> ServiceConfig {
        ServiceConfig { data_dir: data_dir.into(), workers: 2, max_upload_bytes: 64 << 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobError {
    pub code: String,
    pub message: String,
}

/// Persisted job record (`job.json`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub dataset_id: String,
    pub options: AnalysisOptions,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<JobError>,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

pub struct Job {
    pub record: RwLock<JobRecord>,
    pub analysis: RwLock<Option<Arc<Analysis>>>,
}

impl Job {
    pub fn snapshot(&self) -> JobRecord {
        self.record.read().expect("job lock").clone()
    }

    fn advance(&self, status: JobStatus) {
        let mut r = self.record.write().expect("job lock");
        // forward only
        if status as u8 > r.status as u8 {
            r.status = status;
        }
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    datasets: Mutex<HashMap<String, PathBuf>>,
    jobs: Mutex<HashMap<String, Arc<Job>>>,
    workers: Arc<Semaphore>,
}

/// Content address of an upload.
pub fn dataset_id(monitoring: &str, wells: &str, overlays: Option<&str>) -> String {
    let mut h = Sha256::new();
    for part in [Some(monitoring), Some(wells), overlays] {
        match part {
            Some(p) => {
                h.update((p.len() as u64).to_le_bytes());
                h.update(p.as_bytes());
            }
            None => h.update(u64::MAX.to_le_bytes()),
        }
    }
    hex::encode(h.finalize())
}

fn today() -> chrono::NaiveDate {
    chrono::Local::now().date_naive()
}

fn write_json(path: &Path, value: &impl Serialize) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(value).expect("serializes"))?;
    std::fs::rename(tmp, path)
}

impl AppState {
    /// Opens the data directory and registers what earlier runs left there.
    /// Jobs that never finished are marked failed.
    pub fn open(config: ServiceConfig) -> std::io::Result<Arc<AppState>> {
        let ds_root = config.data_dir.join("datasets");
        let an_root = config.data_dir.join("analyses");
        std::fs::create_dir_all(&ds_root)?;
        std::fs::create_dir_all(&an_root)?;
        let mut datasets = HashMap::new();
        for e in std::fs::read_dir(&ds_root)? {
            let e = e?;
            let name = e.file_name().to_string_lossy().to_string();
            if e.file_type()?.is_dir() && !name.starts_with('.') {
                datasets.insert(name, e.path());
            }
        }
        let mut jobs = HashMap::new();
        for e in std::fs::read_dir(&an_root)? {
            let dir = e?.path();
            let Ok(text) = std::fs::read_to_string(dir.join("job.json")) else { continue };
            let Ok(mut record) = serde_json::from_str::<JobRecord>(&text) else {
                tracing::warn!("skipping unreadable job record in {}", dir.display());
                continue;
            };
            let mut analysis = None;
            match record.status {
                JobStatus::Done => match Analysis::load(&dir) {
                    Ok(a) => analysis = Some(Arc::new(a)),
                    Err(e) => {
                        record.status = JobStatus::Failed;
                        record.error = Some(JobError { code: "LOAD_FAILED".into(), message: e.to_string() });
                    }
                },
                JobStatus::Queued | JobStatus::Running => {
                    record.status = JobStatus::Failed;
                    record.error =
                        Some(JobError { code: "INTERRUPTED".into(), message: "service stopped before the job finished".into() });
                    write_json(&dir.join("job.json"), &record)?;
                }
                JobStatus::Failed => {}
            }
            jobs.insert(
                record.id.clone(),
                Arc::new(Job { record: RwLock::new(record), analysis: RwLock::new(analysis) }),
            );
        }
        let workers = Arc::new(Semaphore::new(config.workers.max(1)));
        Ok(Arc::new(AppState { config, datasets: Mutex::new(datasets), jobs: Mutex::new(jobs), workers }))
    }

    /// Validates and stores an upload. Returns the id and the warnings.
    pub fn add_dataset(
        &self,
        monitoring: &str,
        wells: &str,
        overlays: Option<&str>,
    ) -> Result<(String, Dataset, Vec<Diagnostic>), ApiError> {
        let tables = RawTables::parse(monitoring, wells, overlays);
        let (dataset, diags) = match Dataset::build(tables, &DatasetOptions::new(today())) {
            Ok(ok) => ok,
            Err(DatasetError::Invalid(d)) => {
                return Err(ApiError::unprocessable("INVALID_DATASET", "dataset failed validation").with_diagnostics(d))
            }
            Err(e) => return Err(ApiError::internal(e.to_string())),
        };
        let id = dataset_id(monitoring, wells, overlays);
        let mut map = self.datasets.lock().expect("dataset lock");
        if !map.contains_key(&id) {
            let root = self.config.data_dir.join("datasets");
            let tmp = root.join(format!(".{id}.{}", uuid::Uuid::new_v4()));
            let store = || -> std::io::Result<PathBuf> {
                std::fs::create_dir_all(&tmp)?;
                std::fs::write(tmp.join("monitoring.csv"), monitoring)?;
                std::fs::write(tmp.join("wells.csv"), wells)?;
                if let Some(o) = overlays {
                    std::fs::write(tmp.join("overlays.json"), o)?;
                }
                let dest = root.join(&id);
                std::fs::rename(&tmp, &dest)?;
                Ok(dest)
            };
            let dest = store().map_err(|e| ApiError::internal(format!("storing dataset: {e}")))?;
            map.insert(id.clone(), dest);
        }
        Ok((id, dataset, diags))
    }

    pub fn dataset_dir(&self, id: &str) -> Option<PathBuf> {
        self.datasets.lock().expect("dataset lock").get(id).cloned()
    }

    pub fn job(&self, id: &str) -> Option<Arc<Job>> {
        self.jobs.lock().expect("job lock").get(id).cloned()
    }

    /// Registers a job and starts fitting it on the worker pool.
    pub fn submit(self: &Arc<Self>, dataset_id: &str, options: AnalysisOptions) -> Result<JobRecord, ApiError> {
        let dir = self
            .dataset_dir(dataset_id)
            .ok_or_else(|| ApiError::not_found("DATASET_NOT_FOUND", format!("no dataset '{dataset_id}'")))?;
        options.validate().map_err(|m| ApiError::unprocessable("INVALID_OPTIONS", m))?;
        let mut options = options;
        options.today.get_or_insert_with(today);
        let id = uuid::Uuid::new_v4().to_string();
        let record = JobRecord {
            id: id.clone(),
            dataset_id: dataset_id.to_string(),
            options,
            status: JobStatus::Queued,
            error: None,
            diagnostics: Vec::new(),
        };
        let job_dir = self.config.data_dir.join("analyses").join(&id);
        std::fs::create_dir_all(&job_dir)
            .and_then(|_| write_json(&job_dir.join("job.json"), &record))
            .map_err(|e| ApiError::internal(format!("creating job: {e}")))?;
        let job = Arc::new(Job { record: RwLock::new(record.clone()), analysis: RwLock::new(None) });
        self.jobs.lock().expect("job lock").insert(id, job.clone());

        let workers = self.workers.clone();
        tokio::spawn(async move {
            let _permit = workers.acquire_owned().await.expect("semaphore open");
            job.advance(JobStatus::Running);
            let options = job.snapshot().options;
            let out = job_dir.clone();
            let result = tokio::task::spawn_blocking(move || -> Result<Analysis, AnalysisError> {
                let a = Analysis::run_dir(&dir, &options)?;
                a.save(&out)?;
                Ok(a)
            })
            .await;
            let mut record = job.snapshot();
            match result {
                Ok(Ok(a)) => {
                    record.diagnostics = a.diagnostics.clone();
                    *job.analysis.write().expect("job lock") = Some(Arc::new(a));
                    record.status = JobStatus::Done;
                }
                Ok(Err(e)) => {
                    if let AnalysisError::Dataset(DatasetError::Invalid(d)) = &e {
                        record.diagnostics = d.clone();
                    }
                    record.status = JobStatus::Failed;
                    record.error = Some(JobError { code: "ANALYSIS_FAILED".into(), message: e.to_string() });
                }
                Err(e) => {
                    record.status = JobStatus::Failed;
                    record.error = Some(JobError { code: "INTERNAL".into(), message: e.to_string() });
                }
            }
            if let Err(e) = write_json(&job_dir.join("job.json"), &record) {
                tracing::error!("writing job record {}: {e}", record.id);
            }
            *job.record.write().expect("job lock") = record;
        });
        Ok(record)
    }

    /// The finished analysis of a job, or the reason it is not available.
    pub fn analysis(&self, id: &str) -> Result<Arc<Analysis>, ApiError> {
        let job = self.job(id).ok_or_else(|| ApiError::not_found("ANALYSIS_NOT_FOUND", format!("no analysis '{id}'")))?;
        let record = job.snapshot();
        match record.status {
            JobStatus::Done => Ok(job.analysis.read().expect("job lock").clone().expect("done job has an analysis")),
            JobStatus::Failed => Err(ApiError::conflict(
                "ANALYSIS_FAILED",
                record.error.map_or_else(|| "analysis failed".to_string(), |e| e.message),
            )),
            _ => Err(ApiError::conflict("ANALYSIS_NOT_READY", format!("analysis '{id}' is {:?}", record.status))),
        }
    }
}
