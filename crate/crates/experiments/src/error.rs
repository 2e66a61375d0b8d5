use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Rpc(#[from] qtask_service::RpcError),
    #[error(transparent)]
    Service(#[from] qtask_service::ServiceError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("task failed: {0}")]
    Task(String),
    #[error("unexpected result: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;
