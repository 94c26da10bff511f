//! AT-command session that delivers one alert to each recipient.
//!
//! Per recipient, in order:
//!
//! ```text
//! AT\r                      -> OK
//! AT+CMGF=1\r               -> OK
//! AT+CMGS="<number>"\r      -> >
//! <body>\x1A                -> +CMGS: <ref> ... OK
//! ```
//!
//! Each step gets `attempts` tries with `timeout_ms` each. A failed body
//! submission sends ESC and re-opens the prompt before the next try. A
//! recipient that exhausts its attempts is reported failed and the session
//! moves on to the next one.

use serde::Serialize;

use super::modem::{AtStep, ModemLink, CTRL_Z, ESC};
use super::sms::{PhoneNumber, SmsRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DriverSettings {
    pub timeout_ms: u64,
    pub attempts: u32,
}

impl Default for DriverSettings {
    fn default() -> Self {
        Self {
            timeout_ms: 10_000,
            attempts: 3,
        }
    }
}

/// One command/response pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtExchange {
    pub step: AtStep,
    pub command: Vec<u8>,
    pub expect: &'static str,
    pub timeout_ms: u64,
    pub attempts_allowed: u32,
}

impl AtExchange {
    fn new(
        step: AtStep,
        command: Vec<u8>,
        expect: &'static str,
        settings: &DriverSettings,
    ) -> Self {
        Self {
            step,
            command,
            expect,
            timeout_ms: settings.timeout_ms,
            attempts_allowed: settings.attempts,
        }
    }

    pub fn attention(settings: &DriverSettings) -> Self {
        Self::new(AtStep::Attention, b"AT\r".to_vec(), "OK", settings)
    }

    pub fn text_mode(settings: &DriverSettings) -> Self {
        Self::new(AtStep::TextMode, b"AT+CMGF=1\r".to_vec(), "OK", settings)
    }

    pub fn submit(number: &PhoneNumber, settings: &DriverSettings) -> Self {
        Self::new(
            AtStep::Submit,
            format!("AT+CMGS=\"{number}\"\r").into_bytes(),
            ">",
            settings,
        )
    }

    pub fn body(text: &str, settings: &DriverSettings) -> Self {
        let mut command = text.as_bytes().to_vec();
        command.push(CTRL_Z);
        Self::new(AtStep::Body, command, "+CMGS:", settings)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    Timeout,
    ErrorReply,
    Unexpected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DeliveryStatus {
    Delivered {
        reference: u8,
    },
    Failed {
        step: AtStep,
        cause: FailureCause,
        attempts: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecipientOutcome {
    pub number: PhoneNumber,
    #[serde(flatten)]
    pub status: DeliveryStatus,
    pub started_ms: u64,
    pub finished_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DeliveryReport {
    pub outcomes: Vec<RecipientOutcome>,
    pub finished_ms: u64,
}

impl DeliveryReport {
    pub fn delivered(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| matches!(o.status, DeliveryStatus::Delivered { .. }))
            .count()
    }

    pub fn failed(&self) -> usize {
        self.outcomes.len() - self.delivered()
    }

    /// `(number, message reference)` per recipient, `None` when failed.
    pub fn references(&self) -> Vec<(String, Option<u8>)> {
        self.outcomes
            .iter()
            .map(|o| {
                let r = match o.status {
                    DeliveryStatus::Delivered { reference } => Some(reference),
                    DeliveryStatus::Failed { .. } => None,
                };
                (o.number.to_string(), r)
            })
            .collect()
    }

    /// Rebuild [`references`](Self::references) from a modem transcript.
    pub fn references_from_transcript(
        transcript: &[super::TranscriptEntry],
    ) -> Vec<(String, Option<u8>)> {
        let mut out: Vec<(String, Option<u8>)> = Vec::new();
        let mut current: Option<usize> = None;
        for entry in transcript {
            let text = String::from_utf8_lossy(&entry.bytes);
            match entry.direction {
                super::Direction::Tx => {
                    if let Some(number) = text
                        .strip_prefix("AT+CMGS=\"")
                        .and_then(|s| s.strip_suffix("\"\r"))
                    {
                        current = Some(match out.iter().position(|(n, _)| n == number) {
                            Some(i) => i,
                            None => {
                                out.push((number.to_string(), None));
                                out.len() - 1
                            }
                        });
                    }
                }
                super::Direction::Rx => {
                    if let (Some(i), Some(reference)) = (current, parse_reference(&entry.bytes)) {
                        out[i].1 = Some(reference);
                    }
                }
            }
        }
        out
    }
}

fn contains(haystack: &[u8], needle: &str) -> bool {
    haystack
        .windows(needle.len())
        .any(|w| w == needle.as_bytes())
}

fn parse_reference(reply: &[u8]) -> Option<u8> {
    let text = std::str::from_utf8(reply).ok()?;
    let rest = &text[text.find("+CMGS:")? + "+CMGS:".len()..];
    rest.trim_start()
        .split(|c: char| !c.is_ascii_digit())
        .next()?
        .parse()
        .ok()
}

struct Session<'a, L: ModemLink> {
    link: &'a mut L,
    clock_ms: u64,
}

impl<L: ModemLink> Session<'_, L> {
    fn once(&mut self, ex: &AtExchange) -> Result<Vec<u8>, FailureCause> {
        match self
            .link
            .exchange(self.clock_ms, &ex.command, ex.timeout_ms)
        {
            None => {
                self.clock_ms += ex.timeout_ms;
                Err(FailureCause::Timeout)
            }
            Some((at, reply)) => {
                self.clock_ms = at;
                if contains(&reply, ex.expect) {
                    Ok(reply)
                } else if contains(&reply, "ERROR") {
                    Err(FailureCause::ErrorReply)
                } else {
                    Err(FailureCause::Unexpected)
                }
            }
        }
    }

    fn run(&mut self, ex: &AtExchange) -> Result<Vec<u8>, DeliveryStatus> {
        let mut cause = FailureCause::Timeout;
        for _ in 0..ex.attempts_allowed {
            match self.once(ex) {
                Ok(reply) => return Ok(reply),
                Err(c) => cause = c,
            }
        }
        Err(DeliveryStatus::Failed {
            step: ex.step,
            cause,
            attempts: ex.attempts_allowed,
        })
    }

    fn deliver(
        &mut self,
        number: &PhoneNumber,
        body: &str,
        settings: &DriverSettings,
    ) -> DeliveryStatus {
        let result = (|| {
            self.run(&AtExchange::attention(settings))?;
            self.run(&AtExchange::text_mode(settings))?;
            let submit = AtExchange::submit(number, settings);
            let text = AtExchange::body(body, settings);
            let mut tries = 0;
            loop {
                self.run(&submit)?;
                tries += 1;
                match self.once(&text) {
                    Ok(reply) => match parse_reference(&reply) {
                        Some(reference) if contains(&reply, "OK") => {
                            return Ok(DeliveryStatus::Delivered { reference })
                        }
                        _ => {
                            if tries >= text.attempts_allowed {
                                return Err(DeliveryStatus::Failed {
                                    step: AtStep::Body,
                                    cause: FailureCause::Unexpected,
                                    attempts: tries,
                                });
                            }
                        }
                    },
                    Err(cause) => {
                        self.link.write(self.clock_ms, &[ESC]);
                        if tries >= text.attempts_allowed {
                            return Err(DeliveryStatus::Failed {
                                step: AtStep::Body,
                                cause,
                                attempts: tries,
                            });
                        }
                    }
                }
            }
        })();
        result.unwrap_or_else(|failed| failed)
    }
}

/// Deliver `request` to every recipient, serially, starting at `start_ms`
/// of virtual time.
pub fn send_sms<L: ModemLink>(
    request: &SmsRequest,
    link: &mut L,
    start_ms: u64,
    settings: &DriverSettings,
) -> DeliveryReport {
    let mut session = Session {
        link,
        clock_ms: start_ms,
    };
    let mut outcomes = Vec::with_capacity(request.recipients.len());
    for number in &request.recipients {
        let started_ms = session.clock_ms;
        let status = session.deliver(number, &request.body, settings);
        outcomes.push(RecipientOutcome {
            number: number.clone(),
            status,
            started_ms,
            finished_ms: session.clock_ms,
        });
    }
    DeliveryReport {
        outcomes,
        finished_ms: session.clock_ms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsm::modem::{Direction, Fault, FaultKind, ModemEmulator, ModemScript};

    const A: &str = "+8801711111111";
    const B: &str = "+8801722222222";

    fn request(numbers: &[&str]) -> SmsRequest {
        SmsRequest::new(
            numbers.iter().map(|n| n.parse().unwrap()).collect(),
            "ACCIDENT DETECTED\nPulse: 82 bpm\nSpO2: 97 %\nLoc: UNKNOWN".into(),
        )
        .unwrap()
    }

    fn tx_lines(modem: &ModemEmulator) -> Vec<Vec<u8>> {
        modem
            .transcript()
            .iter()
            .filter(|e| e.direction == Direction::Tx)
            .map(|e| e.bytes.clone())
            .collect()
    }

    #[test]
    fn happy_path_single_recipient() {
        let mut modem = ModemEmulator::new(ModemScript::happy_path());
        let report = send_sms(
            &request(&[A]),
            &mut modem,
            15_000,
            &DriverSettings::default(),
        );
        assert_eq!(report.delivered(), 1);
        assert_eq!(
            report.outcomes[0].status,
            DeliveryStatus::Delivered { reference: 1 }
        );
        assert_eq!(report.finished_ms, 15_000 + 50 * 3 + 1_500);
        let tx = tx_lines(&modem);
        assert_eq!(tx.len(), 4);
        assert_eq!(tx[0], b"AT\r");
        assert_eq!(tx[1], b"AT+CMGF=1\r");
        assert_eq!(tx[2], format!("AT+CMGS=\"{A}\"\r").into_bytes());
        assert_eq!(*tx[3].last().unwrap(), 0x1A);
        assert_eq!(modem.outbox().len(), 1);
    }

    #[test]
    fn submit_timeout_exhausts_attempts() {
        let script =
            ModemScript::happy_path().with_fault(Fault::new(AtStep::Submit, FaultKind::Timeout));
        let mut modem = ModemEmulator::new(script);
        let report = send_sms(&request(&[A]), &mut modem, 0, &DriverSettings::default());
        assert_eq!(
            report.outcomes[0].status,
            DeliveryStatus::Failed {
                step: AtStep::Submit,
                cause: FailureCause::Timeout,
                attempts: 3
            }
        );
        let submits = tx_lines(&modem)
            .iter()
            .filter(|t| t.starts_with(b"AT+CMGS"))
            .count();
        assert_eq!(submits, 3);
        assert_eq!(report.finished_ms, 100 + 3 * 10_000);
    }

    #[test]
    fn first_recipient_failure_does_not_stop_second() {
        let script = ModemScript::happy_path()
            .with_fault(Fault::new(AtStep::Submit, FaultKind::Error).for_number(A));
        let mut modem = ModemEmulator::new(script);
        let report = send_sms(&request(&[A, B]), &mut modem, 0, &DriverSettings::default());
        assert_eq!(report.failed(), 1);
        assert_eq!(report.delivered(), 1);
        assert!(matches!(
            report.outcomes[0].status,
            DeliveryStatus::Failed {
                cause: FailureCause::ErrorReply,
                ..
            }
        ));
        assert_eq!(
            report.outcomes[1].status,
            DeliveryStatus::Delivered { reference: 1 }
        );
        assert_eq!(modem.outbox()[0].0, B);
    }

    #[test]
    fn body_error_reopens_prompt() {
        let script = ModemScript::happy_path()
            .with_fault(Fault::new(AtStep::Body, FaultKind::Error).times(1));
        let mut modem = ModemEmulator::new(script);
        let report = send_sms(&request(&[A]), &mut modem, 0, &DriverSettings::default());
        assert_eq!(report.delivered(), 1);
        let tx = tx_lines(&modem);
        assert_eq!(tx.iter().filter(|t| t.starts_with(b"AT+CMGS")).count(), 2);
        assert!(tx.contains(&vec![ESC]));
    }

    #[test]
    fn body_timeout_then_success() {
        let script = ModemScript::happy_path()
            .with_fault(Fault::new(AtStep::Body, FaultKind::Timeout).times(2));
        let mut modem = ModemEmulator::new(script);
        let report = send_sms(&request(&[A]), &mut modem, 0, &DriverSettings::default());
        assert_eq!(
            report.outcomes[0].status,
            DeliveryStatus::Delivered { reference: 1 }
        );
        assert_eq!(modem.outbox().len(), 1);
    }

    #[test]
    fn slow_network_within_timeout_still_delivers() {
        let script = ModemScript::happy_path().with_fault(Fault::new(
            AtStep::Body,
            FaultKind::Delay { extra_ms: 8_000 },
        ));
        let mut modem = ModemEmulator::new(script);
        let report = send_sms(&request(&[A]), &mut modem, 0, &DriverSettings::default());
        assert_eq!(report.delivered(), 1);
        assert_eq!(report.finished_ms, 150 + 9_500);
    }

    #[test]
    fn references_rebuilt_from_transcript() {
        let script = ModemScript::happy_path()
            .with_fault(Fault::new(AtStep::Body, FaultKind::Timeout).for_number(A));
        let mut modem = ModemEmulator::new(script);
        let report = send_sms(&request(&[A, B]), &mut modem, 0, &DriverSettings::default());
        assert_eq!(
            DeliveryReport::references_from_transcript(modem.transcript()),
            report.references()
        );
        assert_eq!(
            report.references(),
            vec![(A.to_string(), None), (B.to_string(), Some(1))]
        );
    }
}
