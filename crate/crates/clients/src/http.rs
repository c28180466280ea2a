//! Blocking HTTP transport: `POST {url}/v1/{kind}`.

use std::time::Duration;

use reqwest::blocking::{multipart, Client};
use serde_json::Value;

use crate::protocol::{extract_parts, MULTIPART_THRESHOLD};
use crate::{ClientEndpoint, ClientError, ClientResult, ErrorBody};

/// Name of the multipart field carrying the JSON request.
pub const REQUEST_PART: &str = "request";

pub fn build_client(ep: &ClientEndpoint) -> ClientResult<Client> {
    Client::builder()
        .timeout(Duration::from_secs_f64(ep.timeout_secs))
        .build()
        .map_err(|e| ClientError::Config(format!("{}: {e}", ep.kind)))
}

pub fn endpoint_url(base: &str, ep: &ClientEndpoint) -> String {
    format!("{}/v1/{}", base.trim_end_matches('/'), ep.kind)
}

pub fn post(client: &Client, base: &str, ep: &ClientEndpoint, mut body: Value) -> ClientResult<Value> {
    let kind = ep.kind;
    let url = endpoint_url(base, ep);
    let json = serde_json::to_vec(&body).map_err(|e| ClientError::InvalidRequest(e.to_string()))?;
    let request = if json.len() > MULTIPART_THRESHOLD {
        let parts = extract_parts(&mut body)?;
        let mut form = multipart::Form::new().part(
            REQUEST_PART,
            multipart::Part::text(body.to_string())
                .mime_str("application/json")
                .map_err(|e| ClientError::InvalidRequest(e.to_string()))?,
        );
        for (name, bytes) in parts {
            form = form.part(name.clone(), multipart::Part::bytes(bytes).file_name(name));
        }
        log::debug!("{kind}: sending multipart request to {url}");
        client.post(&url).multipart(form)
    } else {
        client.post(&url).header(reqwest::header::CONTENT_TYPE, "application/json").body(json)
    };

    let response = request.send().map_err(|e| {
        if e.is_timeout() {
            ClientError::Timeout { kind, secs: ep.timeout_secs }
        } else {
            ClientError::Unavailable { kind, reason: e.to_string() }
        }
    })?;
    let status = response.status();
    let text = response.text().map_err(|e| {
        if e.is_timeout() {
            ClientError::Timeout { kind, secs: ep.timeout_secs }
        } else {
            ClientError::Unavailable { kind, reason: e.to_string() }
        }
    })?;
    if status.is_success() {
        return serde_json::from_str(&text).map_err(|e| ClientError::MalformedResponse { kind, reason: e.to_string() });
    }
    match serde_json::from_str::<ErrorBody>(&text) {
        Ok(body) => Err(ClientError::from_body(kind, body)),
        Err(_) => Err(ClientError::Unavailable { kind, reason: format!("HTTP {status}") }),
    }
}
