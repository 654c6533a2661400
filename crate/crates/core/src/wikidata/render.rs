//! Statement textualization.

use super::{triple_key, Qualifier, Rank, StatementRecord, TextTriple, Value, END_TIME, POINT_IN_TIME, START_TIME};

const MONTHS: [&str; 12] = [
    "January", "February", "March", "April", "May", "June", "July", "August", "September", "October",
    "November", "December",
];

/// Wikidata time precision codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimePrecision {
    Year,
    Month,
    Day,
}

impl TimePrecision {
    pub const YEAR: u8 = 9;
    pub const MONTH: u8 = 10;
    pub const DAY: u8 = 11;

    /// Day and finer render as days; anything coarser than a month, or
    /// unrecognized, renders as a year.
    pub fn from_code(code: u8) -> Self {
        match code {
            Self::MONTH => TimePrecision::Month,
            c if (Self::DAY..=14).contains(&c) => TimePrecision::Day,
            _ => TimePrecision::Year,
        }
    }
}

struct Date {
    year: i64,
    month: Option<u32>,
    day: Option<u32>,
}

fn parse_timestamp(ts: &str) -> Option<Date> {
    let (negative, body) = match ts.as_bytes().first()? {
        b'-' => (true, &ts[1..]),
        b'+' => (false, &ts[1..]),
        _ => (false, ts),
    };
    let date = body.split('T').next()?;
    let mut parts = date.split('-');
    let year: i64 = parts.next()?.parse().ok()?;
    let month = parts.next().and_then(|m| m.parse().ok()).filter(|m| (1..=12).contains(m));
    let day = parts.next().and_then(|d| d.parse().ok()).filter(|d| (1..=31).contains(d));
    Some(Date {
        year: if negative { -year } else { year },
        month,
        day,
    })
}

fn year_text(year: i64) -> String {
    if year < 0 {
        format!("{} BCE", -year)
    } else {
        year.to_string()
    }
}

/// Renders a Wikidata timestamp: `15 August 1947`, `May 2001` or `1999`
/// depending on precision. Unparseable input is returned unchanged.
pub fn format_time_value(timestamp: &str, precision: u8) -> String {
    let Some(date) = parse_timestamp(timestamp) else {
        return timestamp.to_string();
    };
    let year = year_text(date.year);
    match (TimePrecision::from_code(precision), date.month, date.day) {
        (TimePrecision::Day, Some(m), Some(d)) => format!("{d} {} {year}", MONTHS[m as usize - 1]),
        (TimePrecision::Day | TimePrecision::Month, Some(m), _) => format!("{} {year}", MONTHS[m as usize - 1]),
        _ => year,
    }
}

fn year_of(value: &Value) -> Option<String> {
    match value {
        Value::Time { timestamp, .. } => parse_timestamp(timestamp).map(|d| year_text(d.year)),
        _ => None,
    }
}

/// Commons file page for a media file name.
pub fn media_url(file_name: &str) -> String {
    format!("https://commons.wikimedia.org/wiki/File:{}", file_name.replace(' ', "_"))
}

fn value_text(value: &Value, label: &str) -> String {
    match value {
        Value::Entity { id } => {
            if label.is_empty() {
                id.clone()
            } else {
                label.to_string()
            }
        }
        Value::Time { timestamp, precision } => format_time_value(timestamp, *precision),
        Value::Quantity { amount } => amount.strip_prefix('+').unwrap_or(amount).to_string(),
        Value::Text { text } => text.clone(),
        Value::Media { file_name } => file_name.clone(),
        Value::Coordinate { wkt } => render_point(wkt).unwrap_or_else(|| wkt.clone()),
    }
}

/// `Point(lon lat)` as `lat, lon`.
fn render_point(wkt: &str) -> Option<String> {
    let inner = wkt.trim().strip_prefix("Point(")?.strip_suffix(')')?;
    let (lon, lat) = inner.split_once(' ')?;
    Some(format!("{lat}, {lon}"))
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn qualifier_parts(qualifiers: &[Qualifier]) -> Vec<String> {
    let find = |pid: &str| qualifiers.iter().find(|q| q.pid.as_str() == pid);
    let mut parts = Vec::new();
    let start = find(START_TIME).and_then(|q| year_of(&q.value));
    let end = find(END_TIME).and_then(|q| year_of(&q.value));
    let span_rendered = match (&start, &end) {
        (Some(s), None) => {
            parts.push(format!("{s}-current"));
            true
        }
        (Some(s), Some(e)) => {
            parts.push(format!("{s}-{e}"));
            true
        }
        _ => false,
    };
    for q in qualifiers {
        let pid = q.pid.as_str();
        if span_rendered && (pid == START_TIME || pid == END_TIME) {
            continue;
        }
        let text = value_text(&q.value, &q.value_label);
        if pid == POINT_IN_TIME {
            parts.push(text);
        } else {
            parts.push(format!("{}: {text}", q.label));
        }
    }
    parts
}

/// Renders a statement as `Item: Property: value (qualifiers)`.
///
/// Returns `None` for deprecated-rank statements.
pub fn textualize(record: &StatementRecord) -> Option<TextTriple> {
    if record.rank == Rank::Deprecated {
        return None;
    }
    let mut value = value_text(&record.value, &record.value_label);
    if let (Value::Quantity { .. }, Some(unit)) = (&record.value, &record.unit_label) {
        if !unit.is_empty() && unit != "1" {
            value.push(' ');
            value.push_str(unit);
        }
    }
    let mut text = format!("{}: {}: {value}", record.item_label, capitalize(&record.property_label));
    let parts = qualifier_parts(&record.qualifiers);
    if !parts.is_empty() {
        text.push_str(" (");
        text.push_str(&parts.join(", "));
        text.push(')');
    }
    let media = match &record.value {
        Value::Media { file_name } => Some(media_url(file_name)),
        _ => None,
    };
    Some(TextTriple {
        qid: record.qid.clone(),
        pid: record.pid.clone(),
        text,
        triple_key: triple_key(&record.qid, &record.pid),
        rank: record.rank,
        media_url: media,
        image: record.image.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wikidata::{EntityId, PropertyId};

    fn base(qid: &str, item: &str, pid: &str, prop: &str, value: Value, label: &str) -> StatementRecord {
        StatementRecord {
            qid: EntityId::new(qid).unwrap(),
            item_label: item.into(),
            pid: PropertyId::new(pid).unwrap(),
            property_label: prop.into(),
            value,
            value_label: label.into(),
            qualifiers: vec![],
            unit_label: None,
            rank: Rank::Normal,
            image: None,
        }
    }

    fn time(ts: &str, precision: u8) -> Value {
        Value::Time {
            timestamp: ts.into(),
            precision,
        }
    }

    fn qual(pid: &str, label: &str, value: Value, value_label: &str) -> Qualifier {
        Qualifier {
            pid: PropertyId::new(pid).unwrap(),
            label: label.into(),
            value,
            value_label: value_label.into(),
        }
    }

    #[test]
    fn time_formats() {
        assert_eq!(format_time_value("1947-08-15T00:00:00Z", 11), "15 August 1947");
        assert_eq!(format_time_value("+1947-08-15T00:00:00Z", 11), "15 August 1947");
        assert_eq!(format_time_value("1999-01-01T00:00:00Z", 9), "1999");
        assert_eq!(format_time_value("2001-05-01T00:00:00Z", 10), "May 2001");
        assert_eq!(format_time_value("2001-05-01T00:00:00Z", 3), "2001");
        assert_eq!(format_time_value("-0500-01-01T00:00:00Z", 9), "500 BCE");
        assert_eq!(format_time_value("2001-00-00T00:00:00Z", 11), "2001");
        assert_eq!(format_time_value("garbage", 11), "garbage");
    }

    #[test]
    fn inception() {
        let r = base("Q668", "India", "P571", "inception", time("1947-08-15T00:00:00Z", 11), "");
        assert_eq!(textualize(&r).unwrap().text, "India: Inception: 15 August 1947");
    }

    #[test]
    fn open_span_renders_current() {
        let mut r = base("Q668", "India", "P6", "Prime Minister", Value::Entity { id: "Q1058".into() }, "Narendra Modi");
        r.qualifiers.push(qual(START_TIME, "start time", time("2014-05-26T00:00:00Z", 11), ""));
        assert_eq!(textualize(&r).unwrap().text, "India: Prime Minister: Narendra Modi (2014-current)");
        r.qualifiers.push(qual(END_TIME, "end time", time("2024-06-09T00:00:00Z", 11), ""));
        assert_eq!(textualize(&r).unwrap().text, "India: Prime Minister: Narendra Modi (2014-2024)");
    }

    #[test]
    fn generic_and_point_in_time_qualifiers() {
        let mut r = base("Q668", "India", "P2250", "life expectancy", Value::Quantity { amount: "+62".into() }, "");
        r.qualifiers.push(qual(POINT_IN_TIME, "point in time", time("1999-01-01T00:00:00Z", 9), ""));
        assert_eq!(textualize(&r).unwrap().text, "India: Life expectancy: 62 (1999)");
        r.qualifiers.push(qual("P459", "determination method", Value::Entity { id: "Q5".into() }, "estimation"));
        assert_eq!(textualize(&r).unwrap().text, "India: Life expectancy: 62 (1999, determination method: estimation)");
    }

    #[test]
    fn quantity_units() {
        let mut r = base("Q3392", "Nile", "P2043", "length", Value::Quantity { amount: "+6650".into() }, "");
        r.unit_label = Some("kilometre".into());
        assert_eq!(textualize(&r).unwrap().text, "Nile: Length: 6650 kilometre");
        r.unit_label = Some("1".into());
        assert_eq!(textualize(&r).unwrap().text, "Nile: Length: 6650");
    }

    #[test]
    fn media_values() {
        let r = base("Q243", "Eiffel Tower", "P4896", "3D Model", Value::Media { file_name: "[filename]".into() }, "");
        let t = textualize(&r).unwrap();
        assert_eq!(t.text, "Eiffel Tower: 3D Model: [filename]");
        assert_eq!(t.media_url.as_deref(), Some("https://commons.wikimedia.org/wiki/File:[filename]"));

        let r = base("Q668", "India", "P41", "flag image", Value::Media { file_name: "Flag of India.svg".into() }, "");
        let t = textualize(&r).unwrap();
        assert_eq!(t.text, "India: Flag image: Flag of India.svg");
        assert_eq!(t.media_url.as_deref(), Some("https://commons.wikimedia.org/wiki/File:Flag_of_India.svg"));
    }

    #[test]
    fn other_value_kinds() {
        let r = base("Q668", "India", "P625", "coordinate location", Value::Coordinate { wkt: "Point(77.2 28.6)".into() }, "");
        assert_eq!(textualize(&r).unwrap().text, "India: Coordinate location: 28.6, 77.2");
        let r = base("Q668", "India", "P1448", "official name", Value::Text { text: "Bharat".into() }, "");
        assert_eq!(textualize(&r).unwrap().text, "India: Official name: Bharat");
        let r = base("Q668", "India", "P36", "capital", Value::Entity { id: "Q987".into() }, "");
        assert_eq!(textualize(&r).unwrap().text, "India: Capital: Q987");
    }

    #[test]
    fn deprecated_is_skipped() {
        let mut r = base("Q668", "India", "P36", "capital", Value::Entity { id: "Q1".into() }, "Calcutta");
        r.rank = Rank::Deprecated;
        assert!(textualize(&r).is_none());
    }
}
