//! Alert text and recipient handling.
//!
//! The body is always four lines:
//!
//! ```text
//! ACCIDENT DETECTED
//! Pulse: <n> bpm[ (STALE)]
//! SpO2: <n> %[ (STALE)]
//! Loc: <maps link | UNKNOWN>
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::GsmError;
use crate::detection::AccidentEvent;
use crate::nmea::GeoFix;
use crate::scalar::Scalar;

/// Single-segment limit in GSM-7 septets.
pub const MAX_SEGMENT_SEPTETS: usize = 160;

const HEADLINE: &str = "ACCIDENT DETECTED";
const MAPS_PREFIX: &str = "https://maps.google.com/?q=";
const STALE_SUFFIX: &str = " (STALE)";

const GSM7_BASIC: &str = "@£$¥èéùìòÇ\nØø\rÅåΔ_ΦΓΛΩΠΨΣΘΞÆæßÉ !\"#¤%&'()*+,-./0123456789:;<=>?\
¡ABCDEFGHIJKLMNOPQRSTUVWXYZÄÖÑÜ§¿abcdefghijklmnopqrstuvwxyzäöñüà";
const GSM7_EXTENSION: &str = "\u{c}^{}\\[~]|€";

/// Length in GSM-7 septets, or `None` if a character has no GSM-7 encoding.
pub fn gsm7_septets(text: &str) -> Option<usize> {
    text.chars().try_fold(0, |n, c| {
        if GSM7_BASIC.contains(c) {
            Some(n + 1)
        } else if GSM7_EXTENSION.contains(c) {
            Some(n + 2)
        } else {
            None
        }
    })
}

/// E.164 number: `+` then 8 to 15 digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PhoneNumber(String);

impl PhoneNumber {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for PhoneNumber {
    type Err = GsmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix('+')
            .ok_or_else(|| GsmError::InvalidNumber(s.to_string()))?;
        if (8..=15).contains(&digits.len()) && digits.bytes().all(|b| b.is_ascii_digit()) {
            Ok(Self(s.to_string()))
        } else {
            Err(GsmError::InvalidNumber(s.to_string()))
        }
    }
}

impl TryFrom<String> for PhoneNumber {
    type Error = GsmError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PhoneNumber> for String {
    fn from(n: PhoneNumber) -> String {
        n.0
    }
}

impl fmt::Display for PhoneNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Parse a comma-separated contact list.
pub fn parse_contacts(list: &str) -> Result<Vec<PhoneNumber>, GsmError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmsRequest {
    pub recipients: Vec<PhoneNumber>,
    pub body: String,
}

impl SmsRequest {
    pub fn new(recipients: Vec<PhoneNumber>, body: String) -> Result<Self, GsmError> {
        if recipients.is_empty() {
            return Err(GsmError::NoRecipients);
        }
        match gsm7_septets(&body) {
            Some(n) if n <= MAX_SEGMENT_SEPTETS => Ok(Self { recipients, body }),
            Some(n) => Err(GsmError::BodyTooLong(n)),
            None => Err(GsmError::NotGsm7),
        }
    }
}

fn six_places(v: f64) -> String {
    // Normalise -0.0 so a rounded-away sign never reaches the link.
    let v = (v * 1e6).round() / 1e6 + 0.0;
    format!("{v:.6}")
}

pub fn maps_link(fix: &GeoFix) -> Result<String, GsmError> {
    let p = fix.usable_position().ok_or(GsmError::NoLocation)?;
    Ok(format!(
        "{MAPS_PREFIX}{},{}",
        six_places(p.lat),
        six_places(p.lon)
    ))
}

pub fn compose_sms<S: Scalar>(event: &AccidentEvent<S>) -> String {
    let (pulse, spo2, stale) = match &event.physio {
        Some(p) => (
            p.pulse_bpm.round().to_i64().unwrap_or_default().to_string(),
            p.spo2_pct.round().to_i64().unwrap_or_default().to_string(),
            p.stale,
        ),
        None => ("--".to_string(), "--".to_string(), false),
    };
    let suffix = if stale { STALE_SUFFIX } else { "" };
    let location = event
        .fix
        .as_ref()
        .and_then(|f| maps_link(f).ok())
        .unwrap_or_else(|| "UNKNOWN".to_string());
    format!("{HEADLINE}\nPulse: {pulse} bpm{suffix}\nSpO2: {spo2} %{suffix}\nLoc: {location}")
}

/// Fields recovered from an alert body.
#[derive(Debug, Clone, PartialEq)]
pub struct SmsBody {
    pub pulse_bpm: Option<i64>,
    pub spo2_pct: Option<i64>,
    pub stale: bool,
    pub location: Option<(f64, f64)>,
}

fn vital_line(line: &str, prefix: &str, unit: &str) -> Result<(Option<i64>, bool), GsmError> {
    let bad = || GsmError::MalformedBody(line.to_string());
    let rest = line.strip_prefix(prefix).ok_or_else(bad)?;
    let (rest, stale) = match rest.strip_suffix(STALE_SUFFIX) {
        Some(r) => (r, true),
        None => (rest, false),
    };
    let value = rest.strip_suffix(unit).ok_or_else(bad)?;
    if value == "--" {
        return if stale { Err(bad()) } else { Ok((None, false)) };
    }
    value.parse().map(|v| (Some(v), stale)).map_err(|_| bad())
}

/// Inverse of [`compose_sms`], line by line.
pub fn parse_sms_body(body: &str) -> Result<SmsBody, GsmError> {
    let lines: Vec<&str> = body.split('\n').collect();
    let [head, pulse, spo2, loc] = lines[..] else {
        return Err(GsmError::MalformedBody(body.to_string()));
    };
    if head != HEADLINE {
        return Err(GsmError::MalformedBody(head.to_string()));
    }
    let (pulse_bpm, pulse_stale) = vital_line(pulse, "Pulse: ", " bpm")?;
    let (spo2_pct, spo2_stale) = vital_line(spo2, "SpO2: ", " %")?;
    if pulse_stale != spo2_stale || pulse_bpm.is_some() != spo2_pct.is_some() {
        return Err(GsmError::MalformedBody(body.to_string()));
    }
    let bad_loc = || GsmError::MalformedBody(loc.to_string());
    let loc = loc.strip_prefix("Loc: ").ok_or_else(bad_loc)?;
    let location = if loc == "UNKNOWN" {
        None
    } else {
        let coords = loc.strip_prefix(MAPS_PREFIX).ok_or_else(bad_loc)?;
        let (lat, lon) = coords.split_once(',').ok_or_else(bad_loc)?;
        Some((
            lat.parse().map_err(|_| bad_loc())?,
            lon.parse().map_err(|_| bad_loc())?,
        ))
    };
    Ok(SmsBody {
        pulse_bpm,
        spo2_pct,
        stale: pulse_stale,
        location,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::TriggerAxis;
    use crate::nmea::{FixQuality, LatLon};
    use crate::telemetry::PhysioReading;

    fn fix(lat: f64, lon: f64) -> GeoFix {
        GeoFix::with_position(LatLon::new(lat, lon).unwrap(), FixQuality::GpsFix)
    }

    fn event(fix: Option<GeoFix>, physio: Option<PhysioReading>) -> AccidentEvent {
        AccidentEvent {
            detected_at_ms: 10_000,
            confirmed_at_ms: 15_000,
            trigger_axis: TriggerAxis::Y,
            trigger_value: -250,
            fix,
            physio,
        }
    }

    #[test]
    fn maps_link_examples() {
        assert_eq!(
            maps_link(&fix(23.7808, 90.4219)).unwrap(),
            format!("https://maps.google.com/?q={:.6},{:.6}", 23.7808, 90.4219)
        );
        assert_eq!(
            maps_link(&fix(23.7808, 90.4219)).unwrap(),
            "https://maps.google.com/?q=23.780800,90.421900"
        );
        assert_eq!(
            maps_link(&fix(0.0, 0.0)).unwrap(),
            "https://maps.google.com/?q=0.000000,0.000000"
        );
        assert_eq!(
            maps_link(&fix(-0.0000001, 0.0)).unwrap(),
            "https://maps.google.com/?q=0.000000,0.000000"
        );
        assert_eq!(
            maps_link(&GeoFix::no_fix()).unwrap_err(),
            GsmError::NoLocation
        );
    }

    #[test]
    fn compose_full() {
        let physio = PhysioReading::new(82.0, 97.0, 14_000).unwrap();
        let body = compose_sms(&event(Some(fix(23.7808, 90.4219)), Some(physio)));
        assert_eq!(
            body,
            "ACCIDENT DETECTED\nPulse: 82 bpm\nSpO2: 97 %\nLoc: https://maps.google.com/?q=23.780800,90.421900"
        );
        assert!(body.chars().count() <= MAX_SEGMENT_SEPTETS);
        assert_eq!(gsm7_septets(&body), Some(body.chars().count()));
    }

    #[test]
    fn compose_missing_everything() {
        let body = compose_sms(&event(None, None));
        assert_eq!(
            body,
            "ACCIDENT DETECTED\nPulse: -- bpm\nSpO2: -- %\nLoc: UNKNOWN"
        );
        let no_fix = compose_sms(&event(Some(GeoFix::no_fix()), None));
        assert_eq!(no_fix, body);
    }

    #[test]
    fn compose_stale() {
        let mut physio = PhysioReading::new(110.0, 92.0, 0).unwrap();
        physio.stale = true;
        let body = compose_sms(&event(None, Some(physio)));
        let lines: Vec<_> = body.lines().collect();
        assert_eq!(lines[1], "Pulse: 110 bpm (STALE)");
        assert_eq!(lines[2], "SpO2: 92 % (STALE)");
    }

    #[test]
    fn body_grammar_rejects_garbage() {
        assert!(parse_sms_body("hello").is_err());
        assert!(parse_sms_body(
            "ACCIDENT DETECTED\nPulse: -- bpm (STALE)\nSpO2: -- % (STALE)\nLoc: UNKNOWN"
        )
        .is_err());
        assert!(
            parse_sms_body("ACCIDENT DETECTED\nPulse: 80 bpm\nSpO2: -- %\nLoc: UNKNOWN").is_err()
        );
        assert!(
            parse_sms_body("ACCIDENT DETECTED\nPulse: 80 bpm\nSpO2: 90 %\nLoc: somewhere").is_err()
        );
    }

    #[test]
    fn phone_numbers() {
        assert!("+8801712345678".parse::<PhoneNumber>().is_ok());
        assert!("+12345678".parse::<PhoneNumber>().is_ok());
        assert!("+1234567".parse::<PhoneNumber>().is_err());
        assert!("+1234567890123456".parse::<PhoneNumber>().is_err());
        assert!("8801712345678".parse::<PhoneNumber>().is_err());
        assert!("+88017a2345678".parse::<PhoneNumber>().is_err());
        let list = parse_contacts("+8801711111111, +8801722222222").unwrap();
        assert_eq!(list.len(), 2);
        assert!(parse_contacts("+8801711111111,bogus").is_err());
    }

    #[test]
    fn request_validation() {
        let n: PhoneNumber = "+8801711111111".parse().unwrap();
        assert_eq!(
            SmsRequest::new(vec![], "x".into()).unwrap_err(),
            GsmError::NoRecipients
        );
        assert_eq!(
            SmsRequest::new(vec![n.clone()], "x".repeat(161)).unwrap_err(),
            GsmError::BodyTooLong(161)
        );
        assert_eq!(
            SmsRequest::new(vec![n.clone()], "é🚑".into()).unwrap_err(),
            GsmError::NotGsm7
        );
        assert_eq!(gsm7_septets("[x]"), Some(5));
        assert!(SmsRequest::new(vec![n], "x".repeat(160)).is_ok());
    }
}
