//! SMS alerts over a SIM800L-class modem in text mode.

pub mod driver;
pub mod modem;
pub mod sms;

use thiserror::Error;

pub use driver::{
    send_sms, AtExchange, DeliveryReport, DeliveryStatus, DriverSettings, FailureCause,
    RecipientOutcome,
};
pub use modem::{
    AtStep, Direction, Fault, FaultKind, ModemEmulator, ModemLink, ModemScript, TranscriptEntry,
};
pub use sms::{
    compose_sms, maps_link, parse_contacts, parse_sms_body, PhoneNumber, SmsBody, SmsRequest,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GsmError {
    #[error("no usable GPS fix")]
    NoLocation,
    #[error("not an E.164 number: {0:?}")]
    InvalidNumber(String),
    #[error("no recipients")]
    NoRecipients,
    #[error("body is {0} septets, over the single-segment limit")]
    BodyTooLong(usize),
    #[error("body has characters outside GSM-7")]
    NotGsm7,
    #[error("malformed alert body: {0:?}")]
    MalformedBody(String),
}
