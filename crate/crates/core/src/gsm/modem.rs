//! In-process SIM800L stand-in.
//!
//! Speaks the text-mode subset the driver needs (`AT`, `AT+CMGF`, `AT+CMGS`,
//! body + Ctrl-Z, ESC to abort) in virtual time, with scripted faults. Every
//! byte crossing the line is appended to a timestamped transcript.
//!
//! A reply that would land after the caller's deadline is treated as lost on
//! the wire: it is not logged and only the fault countdowns advance.

use serde::{Deserialize, Serialize};

/// Ctrl-Z, terminates an SMS body.
pub const CTRL_Z: u8 = 0x1A;
/// Aborts a pending `>` prompt.
pub const ESC: u8 = 0x1B;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Tx,
    Rx,
}

/// One transfer on the modem line. Serialised as
/// `{"t_ms":…,"direction":"tx"|"rx","bytes":"<escaped ASCII>"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub t_ms: u64,
    pub direction: Direction,
    #[serde(with = "escaped")]
    pub bytes: Vec<u8>,
}

/// Printable ASCII passes through; `\r`, `\n` and `\\` use backslash escapes;
/// everything else becomes `\xHH`.
pub fn escape_bytes(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len());
    for &b in bytes {
        match b {
            b'\\' => out.push_str("\\\\"),
            b'\r' => out.push_str("\\r"),
            b'\n' => out.push_str("\\n"),
            0x20..=0x7e => out.push(b as char),
            _ => out.push_str(&format!("\\x{b:02X}")),
        }
    }
    out
}

pub fn unescape_bytes(text: &str) -> Result<Vec<u8>, String> {
    let mut out = Vec::with_capacity(text.len());
    let mut it = text.bytes();
    while let Some(b) = it.next() {
        if b != b'\\' {
            out.push(b);
            continue;
        }
        match it.next() {
            Some(b'\\') => out.push(b'\\'),
            Some(b'r') => out.push(b'\r'),
            Some(b'n') => out.push(b'\n'),
            Some(b'x') => {
                let hex: Vec<u8> = it.by_ref().take(2).collect();
                let s = std::str::from_utf8(&hex).map_err(|e| e.to_string())?;
                out.push(u8::from_str_radix(s, 16).map_err(|_| format!("bad escape \\x{s}"))?);
            }
            other => return Err(format!("bad escape {other:?}")),
        }
    }
    Ok(out)
}

mod escaped {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::escape_bytes(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        super::unescape_bytes(&text).map_err(serde::de::Error::custom)
    }
}

/// The kind of exchange a transmitted chunk represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtStep {
    /// `AT`
    Attention,
    /// `AT+CMGF=1`
    TextMode,
    /// `AT+CMGS="<number>"`
    Submit,
    /// Message text + Ctrl-Z
    Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultKind {
    /// No reply at all.
    Timeout,
    /// `ERROR` (or `+CMS ERROR` for a body).
    Error,
    /// Normal reply, `extra_ms` late.
    Delay { extra_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub step: AtStep,
    pub kind: FaultKind,
    /// Only for submissions to this number (ignored for `AT`/`AT+CMGF`).
    pub number: Option<String>,
    /// How many matching exchanges to affect; `None` means all of them.
    pub times: Option<u32>,
}

impl Fault {
    pub fn new(step: AtStep, kind: FaultKind) -> Self {
        Self {
            step,
            kind,
            number: None,
            times: None,
        }
    }

    pub fn for_number(mut self, number: &str) -> Self {
        self.number = Some(number.to_string());
        self
    }

    pub fn times(mut self, n: u32) -> Self {
        self.times = Some(n);
        self
    }
}

/// Response behaviour for the emulator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModemScript {
    /// Reply latency for `AT`, `AT+CMGF` and `AT+CMGS`.
    pub command_latency_ms: u64,
    /// Latency from Ctrl-Z to `+CMGS:` (network submission).
    pub submit_latency_ms: u64,
    pub faults: Vec<Fault>,
}

impl Default for ModemScript {
    fn default() -> Self {
        Self::happy_path()
    }
}

impl ModemScript {
    pub fn happy_path() -> Self {
        Self {
            command_latency_ms: 50,
            submit_latency_ms: 1_500,
            faults: Vec::new(),
        }
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.faults.push(fault);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct LineState {
    text_mode: bool,
    /// Destination while the `>` prompt is open.
    prompt_for: Option<String>,
    body: Vec<u8>,
    next_reference: u8,
    remaining: Vec<Option<u32>>,
    outbox: Vec<(String, String)>,
}

/// What the emulator would do with one transmission.
struct Reaction {
    next: LineState,
    reply: Option<(u64, Vec<u8>)>,
}

#[derive(Debug, Clone)]
pub struct ModemEmulator {
    script: ModemScript,
    state: LineState,
    transcript: Vec<TranscriptEntry>,
}

/// Transport between the AT driver and a modem.
pub trait ModemLink {
    /// Transmit `tx` at `now_ms` and wait up to `timeout_ms` for a reply.
    /// Returns the arrival time and bytes of the reply, if one came in time.
    fn exchange(&mut self, now_ms: u64, tx: &[u8], timeout_ms: u64) -> Option<(u64, Vec<u8>)>;

    /// Transmit without waiting for a reply.
    fn write(&mut self, now_ms: u64, tx: &[u8]);
}

const OK: &[u8] = b"\r\nOK\r\n";
const ERROR: &[u8] = b"\r\nERROR\r\n";

impl ModemEmulator {
    pub fn new(script: ModemScript) -> Self {
        let remaining = script.faults.iter().map(|f| f.times).collect();
        Self {
            script,
            state: LineState {
                next_reference: 1,
                remaining,
                ..LineState::default()
            },
            transcript: Vec::new(),
        }
    }

    pub fn script(&self) -> &ModemScript {
        &self.script
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn take_transcript(&mut self) -> Vec<TranscriptEntry> {
        std::mem::take(&mut self.transcript)
    }

    /// Messages accepted for delivery, as `(number, body)`.
    pub fn outbox(&self) -> &[(String, String)] {
        &self.state.outbox
    }

    fn fault_for(
        &self,
        state: &mut LineState,
        step: AtStep,
        number: Option<&str>,
    ) -> Option<FaultKind> {
        for (i, fault) in self.script.faults.iter().enumerate() {
            if fault.step != step {
                continue;
            }
            let applies_to_number = matches!(step, AtStep::Submit | AtStep::Body);
            if let (true, Some(want)) = (applies_to_number, fault.number.as_deref()) {
                if number != Some(want) {
                    continue;
                }
            }
            match &mut state.remaining[i] {
                Some(0) => continue,
                Some(n) => *n -= 1,
                None => {}
            }
            return Some(fault.kind);
        }
        None
    }

    /// The transmission is swallowed: only fault countdowns advance.
    fn silent(&self, counted: LineState) -> Reaction {
        Reaction {
            next: self.lost(counted),
            reply: None,
        }
    }

    fn lost(&self, counted: LineState) -> LineState {
        LineState {
            remaining: counted.remaining,
            body: Vec::new(),
            ..self.state.clone()
        }
    }

    fn react(&self, tx: &[u8]) -> Reaction {
        let mut next = self.state.clone();
        let latency = self.script.command_latency_ms;

        if tx == [ESC] {
            next.prompt_for = None;
            next.body.clear();
            return Reaction { next, reply: None };
        }

        if let Some(number) = next.prompt_for.clone() {
            next.body.extend_from_slice(tx);
            if next.body.last() != Some(&CTRL_Z) {
                return Reaction { next, reply: None };
            }
            let body = String::from_utf8_lossy(&next.body[..next.body.len() - 1]).into_owned();
            next.body.clear();
            let fault = self.fault_for(&mut next, AtStep::Body, Some(&number));
            let base = self.script.submit_latency_ms;
            let (delay, bytes) = match fault {
                Some(FaultKind::Timeout) => return self.silent(next),
                Some(FaultKind::Error) => {
                    next.prompt_for = None;
                    (latency, b"\r\n+CMS ERROR: 500\r\n".to_vec())
                }
                other => {
                    let extra = match other {
                        Some(FaultKind::Delay { extra_ms }) => extra_ms,
                        _ => 0,
                    };
                    let reference = next.next_reference;
                    next.next_reference = reference.wrapping_add(1);
                    next.prompt_for = None;
                    next.outbox.push((number, body));
                    (
                        base + extra,
                        format!("\r\n+CMGS: {reference}\r\n\r\nOK\r\n").into_bytes(),
                    )
                }
            };
            return Reaction {
                next,
                reply: Some((delay, bytes)),
            };
        }

        let Some(command) = tx.strip_suffix(b"\r") else {
            // Not a complete command line; a real modem would keep buffering.
            return Reaction { next, reply: None };
        };
        let command = String::from_utf8_lossy(command).into_owned();
        let (step, number) = if command == "AT" {
            (Some(AtStep::Attention), None)
        } else if command.starts_with("AT+CMGF=") {
            (Some(AtStep::TextMode), None)
        } else if let Some(arg) = command.strip_prefix("AT+CMGS=") {
            let number = arg
                .strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .map(str::to_string);
            (Some(AtStep::Submit), number)
        } else {
            (None, None)
        };

        let fault = step.and_then(|s| self.fault_for(&mut next, s, number.as_deref()));
        let extra = match fault {
            Some(FaultKind::Timeout) => return self.silent(next),
            Some(FaultKind::Error) => {
                return Reaction {
                    next,
                    reply: Some((latency, ERROR.to_vec())),
                }
            }
            Some(FaultKind::Delay { extra_ms }) => extra_ms,
            None => 0,
        };
        let delay = latency + extra;

        let bytes = match step {
            Some(AtStep::Attention) => OK.to_vec(),
            Some(AtStep::TextMode) => match &command["AT+CMGF=".len()..] {
                "1" => {
                    next.text_mode = true;
                    OK.to_vec()
                }
                "0" => {
                    next.text_mode = false;
                    OK.to_vec()
                }
                _ => ERROR.to_vec(),
            },
            Some(AtStep::Submit) => match number {
                Some(n) if next.text_mode => {
                    next.prompt_for = Some(n);
                    b"\r\n> ".to_vec()
                }
                _ => ERROR.to_vec(),
            },
            Some(AtStep::Body) | None => ERROR.to_vec(),
        };
        Reaction {
            next,
            reply: Some((delay, bytes)),
        }
    }

    fn log(&mut self, t_ms: u64, direction: Direction, bytes: &[u8]) {
        self.transcript.push(TranscriptEntry {
            t_ms,
            direction,
            bytes: bytes.to_vec(),
        });
    }

    /// Re-run a transcript against a fresh emulator with the same script and
    /// check every reply matches byte for byte and arrives at the recorded
    /// time. Transmissions with no recorded reply are treated as lost.
    pub fn verify_transcript(
        script: &ModemScript,
        transcript: &[TranscriptEntry],
    ) -> Result<(), String> {
        let mut modem = ModemEmulator::new(script.clone());
        let mut i = 0;
        while i < transcript.len() {
            let tx = &transcript[i];
            if tx.direction != Direction::Tx {
                return Err(format!("entry {i}: reply without a transmission"));
            }
            let reaction = modem.react(&tx.bytes);
            match transcript
                .get(i + 1)
                .filter(|e| e.direction == Direction::Rx)
            {
                Some(rx) => {
                    let Some((delay, bytes)) = reaction.reply else {
                        return Err(format!(
                            "entry {}: recorded reply but modem stays silent",
                            i + 1
                        ));
                    };
                    if bytes != rx.bytes || tx.t_ms + delay != rx.t_ms {
                        return Err(format!(
                            "entry {}: expected {:?} at {} ms, recorded {:?} at {} ms",
                            i + 1,
                            escape_bytes(&bytes),
                            tx.t_ms + delay,
                            escape_bytes(&rx.bytes),
                            rx.t_ms
                        ));
                    }
                    modem.state = reaction.next;
                    i += 2;
                }
                None => {
                    modem.state = match reaction.reply {
                        None => reaction.next,
                        Some(_) => modem.lost(reaction.next),
                    };
                    i += 1;
                }
            }
        }
        Ok(())
    }
}

impl ModemLink for ModemEmulator {
    fn exchange(&mut self, now_ms: u64, tx: &[u8], timeout_ms: u64) -> Option<(u64, Vec<u8>)> {
        self.log(now_ms, Direction::Tx, tx);
        let reaction = self.react(tx);
        match reaction.reply {
            Some((delay, bytes)) if delay <= timeout_ms => {
                self.state = reaction.next;
                let at = now_ms + delay;
                self.log(at, Direction::Rx, &bytes);
                Some((at, bytes))
            }
            Some(_) => {
                self.state = self.lost(reaction.next);
                None
            }
            None => {
                self.state = reaction.next;
                None
            }
        }
    }

    fn write(&mut self, now_ms: u64, tx: &[u8]) {
        self.log(now_ms, Direction::Tx, tx);
        let reaction = self.react(tx);
        self.state = reaction.next;
    }
}
