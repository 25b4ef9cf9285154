//! Simplified client/server requests carried in length-prefixed JSON.

use serde::{Deserialize, Serialize};

use crate::store::Value;

/// Port on which virtual IEDs serve requests.
pub const SERVER_PORT: u16 = 102;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestOp {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    /// Correlates the response; chosen by the client.
    #[serde(default)]
    pub id: u64,
    pub op: RequestOp,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RequestError {
    NoSuchPath,
    NotWritable,
    BadRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    #[serde(default)]
    pub id: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RequestError>,
}

impl Response {
    pub fn ok(id: u64, value: Option<Value>) -> Self {
        Response {
            id,
            ok: true,
            value,
            error: None,
        }
    }

    pub fn err(id: u64, e: RequestError) -> Self {
        Response {
            id,
            ok: false,
            value: None,
            error: Some(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{frame_json, unframe_json};

    #[test]
    fn request_json_shape() {
        let r = Request {
            id: 7,
            op: RequestOp::Write,
            path: "IED1.XCBR1.Pos".into(),
            value: Some(Value::Bool(false)),
        };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, r#"{"id":7,"op":"write","path":"IED1.XCBR1.Pos","value":false}"#);
        let back: Request = unframe_json(&frame_json(&r)).unwrap();
        assert_eq!(back, r);
        let resp: Response = serde_json::from_str(r#"{"ok":false,"error":"NotWritable"}"#).unwrap();
        assert_eq!(resp.error, Some(RequestError::NotWritable));
    }
}
