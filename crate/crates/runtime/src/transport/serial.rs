use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::os::fd::AsRawFd;
use std::os::unix::fs::OpenOptionsExt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::Transport;
use crate::{Error, Result};

/// How long a write may stall on a full output buffer before the link is
/// declared broken.
const WRITE_STALL: Duration = Duration::from_millis(200);

/// Serial character device in raw 8N1 mode, non-blocking.
#[derive(Debug)]
pub struct SerialTransport {
    path: PathBuf,
    baud: u32,
    port: File,
}

impl SerialTransport {
    pub fn open(path: impl AsRef<Path>, baud: u32) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let port = open_port(&path, baud)?;
        Ok(SerialTransport { path, baud, port })
    }

    pub fn baud(&self) -> u32 {
        self.baud
    }

    fn write_all(&mut self, mut buf: &[u8]) -> Result<()> {
        let started = Instant::now();
        while !buf.is_empty() {
            match self.port.write(buf) {
                Ok(0) => return Err(Error::Transport("serial port closed".into())),
                Ok(n) => buf = &buf[n..],
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    if started.elapsed() > WRITE_STALL {
                        return Err(Error::Transport("serial write stalled".into()));
                    }
                    std::thread::sleep(Duration::from_millis(1));
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }

    fn read_available(&mut self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let mut buf = [0u8; 256];
        loop {
            match self.port.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => out.extend_from_slice(&buf[..n]),
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => break,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(out)
    }
}

impl Transport for SerialTransport {
    fn exchange(&mut self, tx: &[u8], _now_ms: u64) -> Result<Vec<u8>> {
        self.write_all(tx)?;
        self.read_available()
    }

    fn reopen(&mut self, _now_ms: u64) -> Result<()> {
        self.port = open_port(&self.path, self.baud)?;
        Ok(())
    }

    fn describe(&self) -> String {
        format!("serial {} @ {} 8N1", self.path.display(), self.baud)
    }
}

fn speed_constant(baud: u32) -> Result<libc::speed_t> {
    Ok(match baud {
        9600 => libc::B9600,
        19200 => libc::B19200,
        38400 => libc::B38400,
        57600 => libc::B57600,
        115200 => libc::B115200,
        230400 => libc::B230400,
        460800 => libc::B460800,
        921600 => libc::B921600,
        other => return Err(Error::Transport(format!("unsupported baud rate {other}"))),
    })
}

fn open_port(path: &Path, baud: u32) -> Result<File> {
    let speed = speed_constant(baud)?;
    let port = OpenOptions::new()
        .read(true)
        .write(true)
        .custom_flags(libc::O_NOCTTY | libc::O_NONBLOCK)
        .open(path)?;
    configure_raw_8n1(&port, speed)?;
    Ok(port)
}

fn configure_raw_8n1(port: &File, speed: libc::speed_t) -> io::Result<()> {
    let fd = port.as_raw_fd();
    // SAFETY: `fd` is an open descriptor owned by `port` for the whole call,
    // and `tio` is fully initialised by tcgetattr before use.
    unsafe {
        let mut tio: libc::termios = std::mem::zeroed();
        if libc::tcgetattr(fd, &mut tio) != 0 {
            return Err(io::Error::last_os_error());
        }
        libc::cfmakeraw(&mut tio);
        tio.c_cflag &= !(libc::PARENB | libc::CSTOPB | libc::CSIZE | libc::CRTSCTS);
        tio.c_cflag |= libc::CS8 | libc::CLOCAL | libc::CREAD;
        tio.c_cc[libc::VMIN] = 0;
        tio.c_cc[libc::VTIME] = 0;
        if libc::cfsetispeed(&mut tio, speed) != 0 || libc::cfsetospeed(&mut tio, speed) != 0 {
            return Err(io::Error::last_os_error());
        }
        if libc::tcsetattr(fd, libc::TCSANOW, &tio) != 0 {
            return Err(io::Error::last_os_error());
        }
        libc::tcflush(fd, libc::TCIOFLUSH);
    }
    Ok(())
}
