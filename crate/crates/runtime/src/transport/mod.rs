//! Byte links between the host and the servo controller.

mod serial;

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use wastive_core::config::TransportConfig;
use wastive_core::protocol::DeviceModel;

use crate::Result;

pub use serial::SerialTransport;

/// A link to the device. `exchange` writes one encoded frame and returns
/// whatever the device sent back since the previous call.
pub trait Transport: Send {
    fn exchange(&mut self, tx: &[u8], now_ms: u64) -> Result<Vec<u8>>;

    /// Re-establishes the link after a failure.
    fn reopen(&mut self, _now_ms: u64) -> Result<()> {
        Ok(())
    }

    fn describe(&self) -> String;

    /// The device's failsafe flag, when the transport can observe it directly.
    fn device_failsafe(&self) -> Option<bool> {
        None
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn exchange(&mut self, tx: &[u8], now_ms: u64) -> Result<Vec<u8>> {
        (**self).exchange(tx, now_ms)
    }

    fn reopen(&mut self, now_ms: u64) -> Result<()> {
        (**self).reopen(now_ms)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }

    fn device_failsafe(&self) -> Option<bool> {
        (**self).device_failsafe()
    }
}

/// In-process link to the reference device model.
#[derive(Debug, Clone)]
pub struct LoopbackTransport {
    device: DeviceModel,
}

impl LoopbackTransport {
    pub fn new(device: DeviceModel) -> Self {
        LoopbackTransport { device }
    }

    pub fn device(&self) -> &DeviceModel {
        &self.device
    }
}

impl Transport for LoopbackTransport {
    fn exchange(&mut self, tx: &[u8], now_ms: u64) -> Result<Vec<u8>> {
        Ok(self.device.step(tx, now_ms))
    }

    fn describe(&self) -> String {
        "loopback".into()
    }

    fn device_failsafe(&self) -> Option<bool> {
        Some(self.device.failsafe_engaged())
    }
}

/// Appends every outgoing frame to a file; nothing ever comes back.
#[derive(Debug)]
pub struct FileTransport {
    path: PathBuf,
    file: File,
}

impl FileTransport {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = Self::open_file(&path)?;
        Ok(FileTransport { path, file })
    }

    fn open_file(path: &Path) -> Result<File> {
        Ok(OpenOptions::new().create(true).append(true).open(path)?)
    }
}

impl Transport for FileTransport {
    fn exchange(&mut self, tx: &[u8], _now_ms: u64) -> Result<Vec<u8>> {
        self.file.write_all(tx)?;
        Ok(Vec::new())
    }

    fn reopen(&mut self, _now_ms: u64) -> Result<()> {
        self.file = Self::open_file(&self.path)?;
        Ok(())
    }

    fn describe(&self) -> String {
        format!("file {}", self.path.display())
    }
}

/// Opens the transport named in the configuration. A loopback device starts
/// at `now_ms` holding `rest_pulses`.
pub fn open_transport(
    config: &TransportConfig,
    rest_pulses: Vec<u16>,
    failsafe_timeout_ms: u64,
    now_ms: u64,
) -> Result<Box<dyn Transport>> {
    Ok(match config {
        TransportConfig::Loopback {} => Box::new(LoopbackTransport::new(DeviceModel::new(
            rest_pulses,
            failsafe_timeout_ms,
            now_ms,
        ))),
        TransportConfig::File { path } => Box::new(FileTransport::open(path)?),
        TransportConfig::Serial { path, baud } => Box::new(SerialTransport::open(path, *baud)?),
    })
}

/// Parses `loopback`, `file:PATH` or `serial:PATH[@BAUD]`.
pub fn parse_spec(spec: &str) -> Result<TransportConfig, String> {
    if spec == "loopback" {
        return Ok(TransportConfig::Loopback {});
    }
    if let Some(path) = spec.strip_prefix("file:").filter(|p| !p.is_empty()) {
        return Ok(TransportConfig::File { path: path.into() });
    }
    if let Some(rest) = spec.strip_prefix("serial:").filter(|p| !p.is_empty()) {
        let (path, baud) = match rest.rsplit_once('@') {
            Some((path, baud)) => (path, baud.parse().map_err(|_| format!("bad baud rate {baud:?}"))?),
            None => (rest, wastive_core::config::DEFAULT_BAUD),
        };
        return Ok(TransportConfig::Serial {
            path: path.into(),
            baud,
        });
    }
    Err(format!(
        "expected loopback, file:PATH or serial:PATH[@BAUD], got {spec:?}"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs() {
        assert_eq!(parse_spec("loopback").unwrap(), TransportConfig::Loopback {});
        assert_eq!(
            parse_spec("file:/tmp/x").unwrap(),
            TransportConfig::File { path: "/tmp/x".into() }
        );
        assert_eq!(
            parse_spec("serial:/dev/ttyACM0").unwrap(),
            TransportConfig::Serial {
                path: "/dev/ttyACM0".into(),
                baud: 115200
            }
        );
        assert_eq!(
            parse_spec("serial:/dev/ttyUSB1@57600").unwrap(),
            TransportConfig::Serial {
                path: "/dev/ttyUSB1".into(),
                baud: 57600
            }
        );
        assert!(parse_spec("serial:").is_err());
        assert!(parse_spec("tcp:1.2.3.4").is_err());
    }
}
