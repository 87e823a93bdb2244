//! Weather lookups through OpenWeatherMap. A place name is first resolved to
//! coordinates with the geocoding API, then current conditions (or the
//! forecast for a given date) are fetched for those coordinates.

use std::sync::Arc;

use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use serde::{Deserialize, Serialize};

use super::{check_status, credential, required_str, CallContext, Tool, ToolError, OPENWEATHER_KEY_VAR};
use crate::registry::{ArgumentMap, ParamKind, ToolParameter, ToolSchema};
use crate::transport::{HttpRequest, Transport};

pub const GEOCODING_ENDPOINT: &str = "http://api.openweathermap.org/geo/1.0/direct";
pub const CURRENT_ENDPOINT: &str = "https://api.openweathermap.org/data/2.5/weather";
pub const FORECAST_ENDPOINT: &str = "https://api.openweathermap.org/data/2.5/forecast";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coordinates {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherReport {
    pub location: String,
    pub resolved_coordinates: Coordinates,
    /// Degrees Celsius.
    pub temperature: f64,
    pub conditions: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Deserialize)]
struct GeoHit {
    name: String,
    lat: f64,
    lon: f64,
    #[serde(default)]
    country: Option<String>,
    #[serde(default)]
    state: Option<String>,
}

#[derive(Deserialize)]
struct Observation {
    dt: i64,
    main: MainBlock,
    #[serde(default)]
    weather: Vec<Condition>,
}

#[derive(Deserialize)]
struct MainBlock {
    temp: f64,
}

#[derive(Deserialize)]
struct Condition {
    #[serde(default)]
    description: String,
    #[serde(default)]
    main: String,
}

#[derive(Deserialize)]
struct Forecast {
    list: Vec<Observation>,
}

pub struct WeatherTool {
    transport: Arc<dyn Transport>,
    api_key: Option<String>,
}

fn upstream(detail: String) -> ToolError {
    ToolError::Upstream { status: None, detail }
}

impl WeatherTool {
    pub fn new(transport: Arc<dyn Transport>, api_key: Option<String>) -> Self {
        Self { transport, api_key }
    }

    /// Builds a GET against one of the OpenWeatherMap endpoints. The key
    /// travels as the `appid` query parameter.
    pub fn build_request(endpoint: &str, params: &[(&str, String)], key: &str) -> Result<HttpRequest, ToolError> {
        let url = reqwest::Url::parse_with_params(endpoint, params.iter().map(|(k, v)| (*k, v.as_str())))
            .map_err(|e| ToolError::InvalidInput(e.to_string()))?;
        Ok(HttpRequest::get(url).secret_query("appid", key))
    }

    /// Query parameters for a lookup at `coords`.
    pub fn point_params(coords: Coordinates) -> [(&'static str, String); 3] {
        [
            ("lat", format!("{:.4}", coords.lat)),
            ("lon", format!("{:.4}", coords.lon)),
            ("units", "metric".to_string()),
        ]
    }

    fn get(&self, endpoint: &str, params: &[(&str, String)], key: &str, ctx: &CallContext) -> Result<String, ToolError> {
        let request = Self::build_request(endpoint, params, key)?;
        let response = self.transport.send(&request, ctx.timeout)?;
        check_status(&response)?;
        Ok(response.body)
    }

    pub fn geocode(&self, location: &str, key: &str, ctx: &CallContext) -> Result<(String, Coordinates), ToolError> {
        let body = self.get(GEOCODING_ENDPOINT, &[("q", location.to_string()), ("limit", "1".into())], key, ctx)?;
        let hits: Vec<GeoHit> =
            serde_json::from_str(&body).map_err(|e| upstream(format!("malformed geocoding response: {e}")))?;
        let hit = hits.into_iter().next().ok_or_else(|| ToolError::UnknownLocation(location.to_string()))?;
        let label = [Some(hit.name), hit.state, hit.country].into_iter().flatten().collect::<Vec<_>>().join(", ");
        Ok((label, Coordinates { lat: hit.lat, lon: hit.lon }))
    }

    pub fn fetch(&self, location: &str, when: Option<NaiveDate>, ctx: &CallContext) -> Result<WeatherReport, ToolError> {
        if location.trim().is_empty() {
            return Err(ToolError::InvalidInput("location must be nonempty".into()));
        }
        let key = credential(&self.api_key, OPENWEATHER_KEY_VAR, self.transport.as_ref())?;
        let (label, coords) = self.geocode(location.trim(), key, ctx)?;
        let params = Self::point_params(coords);
        let observation = match when {
            None => {
                let body = self.get(CURRENT_ENDPOINT, &params, key, ctx)?;
                serde_json::from_str::<Observation>(&body)
                    .map_err(|e| upstream(format!("malformed weather response: {e}")))?
            }
            Some(date) => {
                let body = self.get(FORECAST_ENDPOINT, &params, key, ctx)?;
                let forecast: Forecast =
                    serde_json::from_str(&body).map_err(|e| upstream(format!("malformed forecast response: {e}")))?;
                let noon = date.and_time(NaiveTime::from_hms_opt(12, 0, 0).unwrap_or_default()).and_utc().timestamp();
                forecast
                    .list
                    .into_iter()
                    .filter(|o| DateTime::from_timestamp(o.dt, 0).map(|t| t.date_naive()) == Some(date))
                    .min_by_key(|o| (o.dt - noon).abs())
                    .ok_or_else(|| {
                        ToolError::InvalidInput(format!("no forecast available for {date}; forecasts cover the next five days"))
                    })?
            }
        };
        let conditions = observation
            .weather
            .first()
            .map(|c| if c.description.is_empty() { c.main.clone() } else { c.description.clone() })
            .unwrap_or_default();
        Ok(WeatherReport {
            location: label,
            resolved_coordinates: coords,
            temperature: observation.main.temp,
            conditions,
            timestamp: DateTime::from_timestamp(observation.dt, 0).ok_or_else(|| upstream("invalid timestamp".into()))?,
        })
    }
}

impl Tool for WeatherTool {
    fn schema(&self) -> ToolSchema {
        ToolSchema::new(
            "weather",
            "Gets current weather, or the forecast for a date, for a named place.",
            vec![
                ToolParameter::required("location", ParamKind::String, "city or place name, e.g. London"),
                ToolParameter::optional("date", ParamKind::String, "forecast date as YYYY-MM-DD; omit for current conditions"),
            ],
            "JSON object {location, resolved_coordinates, temperature, conditions, timestamp}",
        )
    }

    fn invoke(&self, args: &ArgumentMap, ctx: &CallContext) -> Result<String, ToolError> {
        let location = required_str(args, "location")?;
        let when = match args.str("date").map(str::trim).filter(|s| !s.is_empty()) {
            Some(s) => Some(
                NaiveDate::parse_from_str(s, "%Y-%m-%d")
                    .map_err(|_| ToolError::InvalidInput(format!("date {s:?} is not YYYY-MM-DD")))?,
            ),
            None => None,
        };
        let report = self.fetch(location, when, ctx)?;
        serde_json::to_string(&report).map_err(|e| upstream(e.to_string()))
    }
}
