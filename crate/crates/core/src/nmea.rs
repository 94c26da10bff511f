//! NMEA-0183 parsing for the GPS receiver.
//!
//! Only GGA and RMC carry what the alert needs (position and fix validity);
//! other sentence types are recognised as well-formed and reported as
//! unsupported. Coordinates are rounded to 6 decimal places on decode.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NmeaError {
    #[error("framing: {0}")]
    Framing(&'static str),
    #[error("checksum mismatch: sentence says {stated:02X}, payload folds to {computed:02X}")]
    Checksum { stated: u8, computed: u8 },
    #[error("unsupported sentence {0}")]
    UnsupportedSentence(String),
    #[error("bad field {field}: {reason}")]
    Field { field: &'static str, reason: String },
}

impl NmeaError {
    fn field(field: &'static str, reason: impl Into<String>) -> Self {
        NmeaError::Field {
            field,
            reason: reason.into(),
        }
    }
}

/// XOR of every payload byte. The payload excludes the leading `$` and the
/// `*` checksum delimiter.
pub fn checksum(payload: &[u8]) -> u8 {
    payload.iter().fold(0, |acc, b| acc ^ b)
}

/// Two uppercase hex digits, as written after `*`.
pub fn checksum_hex(payload: &[u8]) -> String {
    format!("{:02X}", checksum(payload))
}

fn parse_hex_digit(b: u8) -> Option<u8> {
    match b {
        b'0'..=b'9' => Some(b - b'0'),
        b'A'..=b'F' => Some(b - b'A' + 10),
        _ => None,
    }
}

/// Parse the two characters following `*`. Lowercase is rejected so a
/// case-flipped checksum digit never passes.
pub(crate) fn parse_checksum_field(digits: &[u8]) -> Option<u8> {
    match digits {
        [hi, lo] => Some(parse_hex_digit(*hi)? << 4 | parse_hex_digit(*lo)?),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FixQuality {
    NoFix,
    GpsFix,
    DgpsFix,
}

/// UTC time of day with millisecond resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct UtcTime {
    pub hour: u8,
    pub minute: u8,
    /// Seconds × 1000 plus milliseconds, `0..61_000` (leap second allowed).
    pub millis: u16,
}

impl UtcTime {
    /// Parse the NMEA `hhmmss[.s…]` form.
    pub fn from_nmea(field: &str) -> Result<Self, NmeaError> {
        let bad = || NmeaError::field("time", field.to_string());
        let (whole, frac) = field.split_once('.').unwrap_or((field, ""));
        if whole.len() != 6 || !whole.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let hour: u8 = whole[0..2].parse().map_err(|_| bad())?;
        let minute: u8 = whole[2..4].parse().map_err(|_| bad())?;
        let sec: u16 = whole[4..6].parse().map_err(|_| bad())?;
        let mut ms = 0u16;
        for (i, b) in frac.bytes().take(3).enumerate() {
            ms += u16::from(b - b'0') * [100, 10, 1][i];
        }
        if hour > 23 || minute > 59 || sec > 60 {
            return Err(bad());
        }
        Ok(Self {
            hour,
            minute,
            millis: sec * 1000 + ms,
        })
    }

    pub fn to_nmea(self) -> String {
        format!(
            "{:02}{:02}{:02}.{:03}",
            self.hour,
            self.minute,
            self.millis / 1000,
            self.millis % 1000
        )
    }

    /// Time of day for a trace offset, starting from `base`.
    pub fn offset_from(base: UtcTime, offset_ms: u64) -> UtcTime {
        let start =
            (u64::from(base.hour) * 60 + u64::from(base.minute)) * 60_000 + u64::from(base.millis);
        let t = (start + offset_ms) % 86_400_000;
        UtcTime {
            hour: (t / 3_600_000) as u8,
            minute: (t / 60_000 % 60) as u8,
            millis: (t % 60_000) as u16,
        }
    }
}

impl fmt::Display for UtcTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:02}:{:02}:{:02}.{:03}",
            self.hour,
            self.minute,
            self.millis / 1000,
            self.millis % 1000
        )
    }
}

impl From<UtcTime> for String {
    fn from(t: UtcTime) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for UtcTime {
    type Error = NmeaError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        let compact: String = s.chars().filter(|c| *c != ':').collect();
        UtcTime::from_nmea(&compact)
    }
}

/// Signed decimal degrees, south and west negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    #[serde(rename = "latitude_deg")]
    pub lat: f64,
    #[serde(rename = "longitude_deg")]
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self, NmeaError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(NmeaError::field("latitude", lat.to_string()));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(NmeaError::field("longitude", lon.to_string()));
        }
        Ok(Self { lat, lon })
    }
}

/// Decoded GPS position. A `NoFix` never carries coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoFix {
    #[serde(flatten)]
    pub position: Option<LatLon>,
    pub fix_quality: FixQuality,
    pub timestamp_utc: Option<UtcTime>,
    pub satellites: Option<u8>,
}

impl GeoFix {
    pub fn no_fix() -> Self {
        Self {
            position: None,
            fix_quality: FixQuality::NoFix,
            timestamp_utc: None,
            satellites: None,
        }
    }

    pub fn with_position(position: LatLon, fix_quality: FixQuality) -> Self {
        let position = (fix_quality != FixQuality::NoFix).then_some(position);
        Self {
            position,
            fix_quality,
            timestamp_utc: None,
            satellites: None,
        }
    }

    /// Coordinates usable for a location link.
    pub fn usable_position(&self) -> Option<LatLon> {
        match self.fix_quality {
            FixQuality::NoFix => None,
            _ => self.position,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SentenceKind {
    Gga,
    Rmc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NmeaSentence {
    /// Talker plus sentence id, e.g. `GPGGA`.
    pub talker_type: String,
    pub fields: Vec<String>,
    pub checksum: u8,
}

impl NmeaSentence {
    pub fn kind(&self) -> Option<SentenceKind> {
        match &self.talker_type[2..] {
            "GGA" => Some(SentenceKind::Gga),
            "RMC" => Some(SentenceKind::Rmc),
            _ => None,
        }
    }

    fn field(&self, idx: usize, name: &'static str) -> Result<&str, NmeaError> {
        self.fields
            .get(idx)
            .map(String::as_str)
            .ok_or_else(|| NmeaError::field(name, "missing"))
    }
}

pub fn parse_sentence(line: &str) -> Result<NmeaSentence, NmeaError> {
    parse_sentence_bytes(line.as_bytes())
}

/// Total over arbitrary bytes: every input yields a sentence or a typed error.
pub fn parse_sentence_bytes(line: &[u8]) -> Result<NmeaSentence, NmeaError> {
    let line = line
        .strip_suffix(b"\r\n")
        .or_else(|| line.strip_suffix(b"\n"))
        .unwrap_or(line);
    let body = line
        .strip_prefix(b"$")
        .ok_or(NmeaError::Framing("missing '$'"))?;
    let star = body
        .iter()
        .rposition(|&b| b == b'*')
        .ok_or(NmeaError::Framing("missing '*'"))?;
    let (payload, digits) = (&body[..star], &body[star + 1..]);
    let stated =
        parse_checksum_field(digits).ok_or(NmeaError::Framing("checksum is not two hex digits"))?;
    let computed = checksum(payload);
    if stated != computed {
        return Err(NmeaError::Checksum { stated, computed });
    }

    if !payload
        .iter()
        .all(|&b| (0x20..0x7f).contains(&b) && b != b'$' && b != b'*')
    {
        return Err(NmeaError::Framing("payload is not printable ASCII"));
    }
    // Printable ASCII checked above, so this cannot fail.
    let text = std::str::from_utf8(payload).map_err(|_| NmeaError::Framing("not ASCII"))?;
    let mut parts = text.split(',');
    let address = parts.next().unwrap_or_default();
    if address.len() != 5
        || !address
            .bytes()
            .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit())
    {
        return Err(NmeaError::Framing("address field is not 5 characters"));
    }
    let sentence = NmeaSentence {
        talker_type: address.to_string(),
        fields: parts.map(str::to_string).collect(),
        checksum: stated,
    };
    if sentence.kind().is_none() {
        return Err(NmeaError::UnsupportedSentence(sentence.talker_type));
    }
    Ok(sentence)
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// `d…dmm.mmmm` with `degree_digits` leading degree digits.
fn parse_coordinate(
    value: &str,
    hemisphere: &str,
    degree_digits: usize,
    name: &'static str,
) -> Result<f64, NmeaError> {
    let (positive, negative, max) = if degree_digits == 2 {
        ("N", "S", 90.0)
    } else {
        ("E", "W", 180.0)
    };
    let (whole, frac) = value.split_once('.').unwrap_or((value, ""));
    if whole.len() != degree_digits + 2
        || !whole.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(NmeaError::field(name, value.to_string()));
    }
    let degrees: f64 = whole[..degree_digits]
        .parse()
        .map_err(|_| NmeaError::field(name, value.to_string()))?;
    let minutes: f64 = value[degree_digits..]
        .parse()
        .map_err(|_| NmeaError::field(name, value.to_string()))?;
    if minutes >= 60.0 {
        return Err(NmeaError::field(
            name,
            format!("minutes {minutes} out of range"),
        ));
    }
    let magnitude = round6(degrees + minutes / 60.0);
    if magnitude > max {
        return Err(NmeaError::field(name, format!("{magnitude} out of range")));
    }
    if hemisphere == positive {
        Ok(magnitude)
    } else if hemisphere == negative {
        Ok(-magnitude)
    } else {
        Err(NmeaError::field(name, format!("hemisphere {hemisphere:?}")))
    }
}

fn parse_position(s: &NmeaSentence, first: usize) -> Result<LatLon, NmeaError> {
    let lat = parse_coordinate(
        s.field(first, "latitude")?,
        s.field(first + 1, "latitude hemisphere")?,
        2,
        "latitude",
    )?;
    let lon = parse_coordinate(
        s.field(first + 2, "longitude")?,
        s.field(first + 3, "longitude hemisphere")?,
        3,
        "longitude",
    )?;
    LatLon::new(lat, lon)
}

fn parse_time(field: &str) -> Result<Option<UtcTime>, NmeaError> {
    if field.is_empty() {
        Ok(None)
    } else {
        UtcTime::from_nmea(field).map(Some)
    }
}

pub fn to_geofix(sentence: &NmeaSentence) -> Result<GeoFix, NmeaError> {
    match sentence.kind() {
        Some(SentenceKind::Gga) => {
            let timestamp_utc = parse_time(sentence.field(0, "time")?)?;
            let quality = sentence.field(5, "quality")?;
            let fix_quality = match quality {
                "0" => FixQuality::NoFix,
                "2" => FixQuality::DgpsFix,
                "1" | "3" | "4" | "5" | "6" | "7" | "8" => FixQuality::GpsFix,
                other => return Err(NmeaError::field("quality", other.to_string())),
            };
            let sats = sentence.field(6, "satellites")?;
            let satellites = if sats.is_empty() {
                None
            } else {
                Some(
                    sats.parse()
                        .map_err(|_| NmeaError::field("satellites", sats.to_string()))?,
                )
            };
            let position = match fix_quality {
                FixQuality::NoFix => None,
                _ => Some(parse_position(sentence, 1)?),
            };
            Ok(GeoFix {
                position,
                fix_quality,
                timestamp_utc,
                satellites,
            })
        }
        Some(SentenceKind::Rmc) => {
            let timestamp_utc = parse_time(sentence.field(0, "time")?)?;
            let (fix_quality, position) = match sentence.field(1, "status")? {
                "A" => (FixQuality::GpsFix, Some(parse_position(sentence, 2)?)),
                "V" => (FixQuality::NoFix, None),
                other => return Err(NmeaError::field("status", other.to_string())),
            };
            Ok(GeoFix {
                position,
                fix_quality,
                timestamp_utc,
                satellites: None,
            })
        }
        None => Err(NmeaError::UnsupportedSentence(sentence.talker_type.clone())),
    }
}

fn format_coordinate(
    value: f64,
    degree_digits: usize,
    hemispheres: (char, char),
) -> (String, char) {
    let micro_minutes = (value.abs() * 60e6).round() as u64;
    let degrees = micro_minutes / 60_000_000;
    let rest = micro_minutes % 60_000_000;
    let text = format!(
        "{degrees:0width$}{:02}.{:06}",
        rest / 1_000_000,
        rest % 1_000_000,
        width = degree_digits
    );
    let hemi = if value < 0.0 {
        hemispheres.1
    } else {
        hemispheres.0
    };
    (text, hemi)
}

/// Wrap a payload as a complete sentence: `$<payload>*<CK>`.
pub fn frame_sentence(payload: &str) -> String {
    format!("${payload}*{}", checksum_hex(payload.as_bytes()))
}

/// Render a fix as a `$GPGGA` sentence (no line terminator).
pub fn format_gga(fix: &GeoFix) -> String {
    let time = fix.timestamp_utc.map(UtcTime::to_nmea).unwrap_or_default();
    let quality = match fix.fix_quality {
        FixQuality::NoFix => 0,
        FixQuality::GpsFix => 1,
        FixQuality::DgpsFix => 2,
    };
    let sats = fix
        .satellites
        .map(|n| format!("{n:02}"))
        .unwrap_or_default();
    let (lat, lat_h, lon, lon_h) = match fix.usable_position() {
        Some(p) => {
            let (lat, lat_h) = format_coordinate(p.lat, 2, ('N', 'S'));
            let (lon, lon_h) = format_coordinate(p.lon, 3, ('E', 'W'));
            (lat, lat_h.to_string(), lon, lon_h.to_string())
        }
        None => Default::default(),
    };
    frame_sentence(&format!(
        "GPGGA,{time},{lat},{lat_h},{lon},{lon_h},{quality},{sats},0.9,10.0,M,-52.0,M,,"
    ))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NmeaStats {
    pub fixes: u64,
    pub no_fix: u64,
    pub framing_errors: u64,
    pub checksum_errors: u64,
    pub field_errors: u64,
    pub unsupported: u64,
}

/// Last-known-position register.
///
/// No-fix sentences update the freshness bookkeeping but never overwrite the
/// last good coordinates.
#[derive(Debug, Clone, Default)]
pub struct FixRegister {
    last_good: Option<(GeoFix, u64)>,
    last_sentence_ms: Option<u64>,
    stats: NmeaStats,
}

impl FixRegister {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ingest(&mut self, line: &[u8], now_ms: u64) -> Result<GeoFix, NmeaError> {
        let result = parse_sentence_bytes(line).and_then(|s| to_geofix(&s));
        match &result {
            Ok(fix) => {
                self.last_sentence_ms = Some(now_ms);
                if fix.usable_position().is_some() {
                    self.stats.fixes += 1;
                    self.last_good = Some((fix.clone(), now_ms));
                } else {
                    self.stats.no_fix += 1;
                }
            }
            Err(NmeaError::Framing(_)) => self.stats.framing_errors += 1,
            Err(NmeaError::Checksum { .. }) => self.stats.checksum_errors += 1,
            Err(NmeaError::Field { .. }) => self.stats.field_errors += 1,
            Err(NmeaError::UnsupportedSentence(_)) => self.stats.unsupported += 1,
        }
        result
    }

    pub fn latest(&self) -> Option<&GeoFix> {
        self.last_good.as_ref().map(|(f, _)| f)
    }

    /// Age of the last good coordinates.
    pub fn fix_age_ms(&self, now_ms: u64) -> Option<u64> {
        self.last_good
            .as_ref()
            .map(|(_, t)| now_ms.saturating_sub(*t))
    }

    /// Time since any decodable sentence arrived, fix or not.
    pub fn receiver_age_ms(&self, now_ms: u64) -> Option<u64> {
        self.last_sentence_ms.map(|t| now_ms.saturating_sub(t))
    }

    pub fn stats(&self) -> NmeaStats {
        self.stats
    }
}
