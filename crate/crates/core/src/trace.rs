//! Request traces: parsing the final-traces file format, synthetic trace
//! generation, pseudo-random cell assignment, and descriptive statistics.
//!
//! A trace is a [`Catalog`] of contents plus a time-ordered [`RequestLog`].
//! The on-disk format is one request per line, comma-separated:
//! `FRAME-TIME,HTTP-URI,SIZE`. An optional header line is auto-detected by a
//! non-numeric first field.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Error, Result};

/// One cacheable content item.
#[derive(Debug, Clone, PartialEq)]
pub struct Content {
    /// Dense index in `[0, F)`.
    pub id: usize,
    /// Opaque identifier, typically the HTTP URI.
    pub uri_key: String,
    /// Size in bytes, at least 1.
    pub size: u64,
    /// Target delivery bitrate in bytes/second.
    pub bitrate: f64,
}

/// The content library.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Catalog {
    pub contents: Vec<Content>,
    pub total_bytes: u64,
}

impl Catalog {
    pub fn from_contents(contents: Vec<Content>) -> Self {
        let total_bytes = contents.iter().map(|c| c.size).sum();
        Catalog {
            contents,
            total_bytes,
        }
    }

    pub fn len(&self) -> usize {
        self.contents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contents.is_empty()
    }
}

/// A single content request.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    /// Seconds since trace start.
    pub arrival: f64,
    /// Content id into the companion catalog.
    pub content: usize,
    /// Serving cell, set by [`assign_requests_to_cells`].
    pub cell: Option<usize>,
}

/// Time-ordered request log over an observation window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RequestLog {
    pub requests: Vec<Request>,
    /// Observation window length in seconds.
    pub duration: f64,
}

impl RequestLog {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn is_assigned(&self) -> bool {
        self.requests.iter().all(|r| r.cell.is_some())
    }
}

/// Parameters for [`generate_synthetic_trace`].
#[derive(Debug, Clone)]
pub struct SyntheticTraceParams {
    pub num_contents: usize,
    pub num_requests: usize,
    /// Observation window in seconds.
    pub duration: f64,
    /// Zipf exponent over content ranks, > 0.
    pub zipf_exponent: f64,
    /// Log-mean of the log-normal size law (natural log of bytes).
    pub size_log_mean: f64,
    pub size_log_sigma: f64,
    /// Truncation bounds for sizes, in bytes.
    pub size_min: u64,
    pub size_max: u64,
    /// Uniform target bitrate in bytes/second.
    pub bitrate: f64,
    pub seed: u64,
}

impl Default for SyntheticTraceParams {
    fn default() -> Self {
        // Size bounds follow the 1 byte .. 6.024 GByte range of the
        // reference setup; the log-normal centers around ~1 MByte objects.
        SyntheticTraceParams {
            num_contents: 2000,
            num_requests: 50_000,
            duration: 24_420.0,
            zipf_exponent: 1.0,
            size_log_mean: 13.8,
            size_log_sigma: 1.5,
            size_min: 1,
            size_max: 6_024_000_000,
            bitrate: 4_000_000.0,
            seed: 1,
        }
    }
}

impl SyntheticTraceParams {
    fn validate(&self) -> Result<()> {
        if self.num_contents < 1 {
            return Err(Error::InvalidInput("num_contents must be >= 1".into()));
        }
        if self.num_requests < 1 {
            return Err(Error::InvalidInput("num_requests must be >= 1".into()));
        }
        if !(self.duration > 0.0) {
            return Err(Error::InvalidInput("duration must be > 0".into()));
        }
        if !(self.zipf_exponent > 0.0) {
            return Err(Error::InvalidInput("zipf_exponent must be > 0".into()));
        }
        if !(self.bitrate > 0.0) {
            return Err(Error::InvalidInput("bitrate must be > 0".into()));
        }
        if self.size_min < 1 || self.size_min > self.size_max {
            return Err(Error::InvalidInput(
                "size bounds must satisfy 1 <= size_min <= size_max".into(),
            ));
        }
        Ok(())
    }
}

/// Output of [`parse_final_traces`]: the trace plus malformed-row accounting.
#[derive(Debug, Clone)]
pub struct ParsedTrace {
    pub catalog: Catalog,
    pub log: RequestLog,
    /// Rows dropped for wrong column count, non-numeric fields, or SIZE <= 0.
    pub skipped_rows: u64,
}

/// Descriptive statistics over an assigned trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStats {
    pub num_requests: usize,
    pub num_contents: usize,
    pub num_cells: usize,
    pub duration: f64,
    /// Sum over requests of the requested content's size.
    pub total_requested_bytes: u64,
    /// Fraction of (cell, content) pairs with at least one request.
    pub rating_density: f64,
    pub skipped_rows: u64,
}

impl TraceStats {
    /// Flat `key=value` text block, one field per line.
    pub fn to_kv_block(&self) -> String {
        format!(
            "num_requests={}\nnum_contents={}\nnum_cells={}\nduration={}\n\
             total_requested_bytes={}\nrating_density={}\nskipped_rows={}\n",
            self.num_requests,
            self.num_contents,
            self.num_cells,
            self.duration,
            self.total_requested_bytes,
            self.rating_density,
            self.skipped_rows
        )
    }

    pub fn csv_header() -> &'static str {
        "num_requests,num_contents,num_cells,duration,total_requested_bytes,rating_density,skipped_rows"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.num_requests,
            self.num_contents,
            self.num_cells,
            self.duration,
            self.total_requested_bytes,
            self.rating_density,
            self.skipped_rows
        )
    }
}

/// Parse a final-traces file: `FRAME-TIME,HTTP-URI,SIZE`, one request per
/// line. Malformed rows are skipped and counted; duplicate URIs keep the
/// maximum observed size. Arrivals are rebased so the earliest is 0.
pub fn parse_final_traces<R: BufRead>(input: R, default_bitrate: f64) -> Result<ParsedTrace> {
    if !(default_bitrate > 0.0) {
        return Err(Error::InvalidInput("default_bitrate must be > 0".into()));
    }

    let mut uri_ids: HashMap<String, usize> = HashMap::new();
    let mut contents: Vec<Content> = Vec::new();
    let mut rows: Vec<(f64, usize)> = Vec::new();
    let mut skipped_rows = 0u64;
    let mut first_line = true;

    for line in input.lines() {
        let line = line.map_err(|e| Error::Parse(format!("read failure: {e}")))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        let header_candidate = first_line;
        first_line = false;
        if fields.len() != 3 {
            skipped_rows += 1;
            continue;
        }
        let arrival: f64 = match fields[0].trim().parse() {
            Ok(v) => v,
            Err(_) => {
                // A non-numeric first field on the first line is a header.
                if !header_candidate {
                    skipped_rows += 1;
                }
                continue;
            }
        };
        let size: i64 = match fields[2].trim().parse() {
            Ok(v) => v,
            Err(_) => {
                skipped_rows += 1;
                continue;
            }
        };
        if size <= 0 || !arrival.is_finite() {
            skipped_rows += 1;
            continue;
        }
        let uri = fields[1].trim();
        let id = match uri_ids.get(uri) {
            Some(&id) => {
                // Conflicting sizes for one URI: keep the maximum observed.
                if contents[id].size < size as u64 {
                    contents[id].size = size as u64;
                }
                id
            }
            None => {
                let id = contents.len();
                uri_ids.insert(uri.to_string(), id);
                contents.push(Content {
                    id,
                    uri_key: uri.to_string(),
                    size: size as u64,
                    bitrate: default_bitrate,
                });
                id
            }
        };
        rows.push((arrival, id));
    }

    if rows.is_empty() {
        return Err(Error::Parse(format!(
            "no valid rows ({skipped_rows} skipped)"
        )));
    }

    let t0 = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let mut requests: Vec<Request> = rows
        .into_iter()
        .map(|(arrival, content)| Request {
            arrival: arrival - t0,
            content,
            cell: None,
        })
        .collect();
    requests.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));
    let duration = requests.last().map(|r| r.arrival).unwrap_or(0.0);

    Ok(ParsedTrace {
        catalog: Catalog::from_contents(contents),
        log: RequestLog { requests, duration },
        skipped_rows,
    })
}

/// Serialize a trace back to the final-traces format. Floats are written in
/// shortest round-trip form so parse/serialize/parse is the identity.
pub fn write_final_traces<W: Write>(
    catalog: &Catalog,
    log: &RequestLog,
    mut out: W,
) -> std::io::Result<()> {
    for req in &log.requests {
        let c = &catalog.contents[req.content];
        writeln!(out, "{},{},{}", req.arrival, c.uri_key, c.size)?;
    }
    Ok(())
}

/// Sample from a Zipf law over ranks `1..=n` with the given exponent.
///
/// Cumulative-weight inversion keeps sampling deterministic and stable for
/// extreme exponents.
struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    fn new(n: usize, exponent: f64) -> Self {
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for rank in 1..=n {
            acc += (rank as f64).powf(-exponent);
            cdf.push(acc);
        }
        let total = acc;
        for v in &mut cdf {
            *v /= total;
        }
        ZipfSampler { cdf }
    }

    /// Returns a 0-based rank.
    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1)
    }
}

/// Generate a synthetic trace: Zipf content popularity over ranks, i.i.d.
/// request draws, uniform arrivals over the window, per-content sizes from a
/// truncated log-normal. Pure function of the params.
pub fn generate_synthetic_trace(params: &SyntheticTraceParams) -> Result<(Catalog, RequestLog)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let normal = Normal::new(params.size_log_mean, params.size_log_sigma)
        .map_err(|e| Error::InvalidInput(format!("size law: {e}")))?;
    let contents: Vec<Content> = (0..params.num_contents)
        .map(|id| {
            // Truncate by rejection, falling back to clamping if the
            // acceptance region is tiny.
            let mut size = 0u64;
            for _ in 0..1000 {
                let s = normal.sample(&mut rng).exp();
                if s >= params.size_min as f64 && s <= params.size_max as f64 {
                    size = s.round() as u64;
                    break;
                }
            }
            if size == 0 {
                let s = normal.sample(&mut rng).exp();
                size = (s.round() as u64).clamp(params.size_min, params.size_max);
            }
            Content {
                id,
                uri_key: format!("synth/{id}"),
                size: size.max(1),
                bitrate: params.bitrate,
            }
        })
        .collect();

    let zipf = ZipfSampler::new(params.num_contents, params.zipf_exponent);
    let mut requests: Vec<Request> = (0..params.num_requests)
        .map(|_| {
            let content = zipf.sample(&mut rng);
            let arrival = rng.random_range(0.0..params.duration);
            Request {
                arrival,
                content,
                cell: None,
            }
        })
        .collect();
    requests.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));

    Ok((
        Catalog::from_contents(contents),
        RequestLog {
            requests,
            duration: params.duration,
        },
    ))
}

/// Assign every request independently and uniformly to one of `num_cells`
/// cells. Rejects logs that already carry assignments.
pub fn assign_requests_to_cells(
    log: &RequestLog,
    num_cells: usize,
    seed: u64,
) -> Result<RequestLog> {
    if num_cells < 1 {
        return Err(Error::InvalidInput("num_cells must be >= 1".into()));
    }
    if log.requests.iter().any(|r| r.cell.is_some()) {
        return Err(Error::InvalidInput(
            "request log already carries cell assignments".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let requests = log
        .requests
        .iter()
        .map(|r| Request {
            cell: Some(rng.random_range(0..num_cells)),
            ..r.clone()
        })
        .collect();
    Ok(RequestLog {
        requests,
        duration: log.duration,
    })
}

/// Descriptive statistics over an assigned trace.
pub fn trace_stats(
    catalog: &Catalog,
    log: &RequestLog,
    num_cells: usize,
    skipped_rows: u64,
) -> Result<TraceStats> {
    if !log.is_assigned() {
        return Err(Error::InvalidInput(
            "trace_stats requires a cell-assigned log".into(),
        ));
    }
    let mut observed: std::collections::HashSet<(usize, usize)> = std::collections::HashSet::new();
    let mut total_requested_bytes = 0u64;
    for req in &log.requests {
        total_requested_bytes += catalog.contents[req.content].size;
        observed.insert((req.cell.unwrap(), req.content));
    }
    let cells_times_contents = (num_cells * catalog.len()) as f64;
    let rating_density = if cells_times_contents > 0.0 {
        observed.len() as f64 / cells_times_contents
    } else {
        0.0
    };
    Ok(TraceStats {
        num_requests: log.len(),
        num_contents: catalog.len(),
        num_cells,
        duration: log.duration,
        total_requested_bytes,
        rating_density,
        skipped_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str) -> Result<ParsedTrace> {
        parse_final_traces(Cursor::new(text.as_bytes()), 4e6)
    }

    #[test]
    fn parses_three_rows_two_uris() {
        let out = parse("0.5,/a,100\n1.0,/b,5000\n2.0,/a,100\n").unwrap();
        assert_eq!(out.catalog.len(), 2);
        assert_eq!(out.log.len(), 3);
        assert_eq!(out.skipped_rows, 0);
        assert_eq!(out.log.requests[0].arrival, 0.0);
        assert_eq!(out.log.duration, 1.5);
        assert_eq!(out.catalog.total_bytes, 5100);
    }

    #[test]
    fn skips_malformed_rows() {
        let mut text = String::new();
        for i in 0..10 {
            text.push_str(&format!("{i}.0,/c{i},10\n"));
        }
        text.push_str("5.0,/bad,abc\n");
        let out = parse(&text).unwrap();
        assert_eq!(out.log.len(), 10);
        assert_eq!(out.skipped_rows, 1);
    }

    #[test]
    fn skips_nonpositive_sizes_and_wrong_column_counts() {
        let out = parse("0,/a,5\n1,/b,0\n2,/c,-3\n3,only_two\n4,/d,7\n").unwrap();
        assert_eq!(out.log.len(), 2);
        assert_eq!(out.skipped_rows, 3);
    }

    #[test]
    fn zero_valid_rows_is_fatal() {
        assert!(matches!(parse("x,y\nfoo\n"), Err(Error::Parse(_))));
        assert!(matches!(parse(""), Err(Error::Parse(_))));
    }

    #[test]
    fn header_line_auto_detected() {
        let out = parse("FRAME-TIME,HTTP-URI,SIZE\n1.0,/a,10\n").unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.skipped_rows, 0);
    }

    #[test]
    fn duplicate_uri_keeps_max_size() {
        let out = parse("0,/a,100\n1,/a,700\n2,/a,50\n").unwrap();
        assert_eq!(out.catalog.contents[0].size, 700);
        assert_eq!(out.catalog.total_bytes, 700);
    }

    #[test]
    fn roundtrip_identity() {
        let out = parse("0.25,/a,100\n1.125,/b,5000\n2.5,/a,100\n").unwrap();
        let mut buf = Vec::new();
        write_final_traces(&out.catalog, &out.log, &mut buf).unwrap();
        let again = parse_final_traces(Cursor::new(&buf), 4e6).unwrap();
        assert_eq!(again.catalog, out.catalog);
        assert_eq!(again.log, out.log);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let params = SyntheticTraceParams {
            num_contents: 50,
            num_requests: 500,
            ..Default::default()
        };
        let a = generate_synthetic_trace(&params).unwrap();
        let b = generate_synthetic_trace(&params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synthetic_huge_exponent_concentrates_on_rank_one() {
        let params = SyntheticTraceParams {
            num_contents: 10,
            num_requests: 1000,
            zipf_exponent: 50.0,
            ..Default::default()
        };
        let (_, log) = generate_synthetic_trace(&params).unwrap();
        let rank1 = log.requests.iter().filter(|r| r.content == 0).count();
        assert!(rank1 as f64 >= 0.99 * 1000.0, "rank-1 hits: {rank1}");
    }

    #[test]
    fn synthetic_rejects_zero_requests() {
        let params = SyntheticTraceParams {
            num_requests: 0,
            ..Default::default()
        };
        assert!(generate_synthetic_trace(&params).is_err());
    }

    #[test]
    fn synthetic_sizes_respect_bounds_and_arrivals_sorted() {
        let params = SyntheticTraceParams {
            num_contents: 200,
            num_requests: 2000,
            size_min: 10,
            size_max: 100_000,
            ..Default::default()
        };
        let (catalog, log) = generate_synthetic_trace(&params).unwrap();
        assert!(catalog
            .contents
            .iter()
            .all(|c| c.size >= 10 && c.size <= 100_000));
        assert!(log
            .requests
            .windows(2)
            .all(|w| w[0].arrival <= w[1].arrival));
        assert!(log.requests.iter().all(|r| r.arrival <= log.duration));
    }

    #[test]
    fn assign_single_cell() {
        let params = SyntheticTraceParams {
            num_contents: 5,
            num_requests: 100,
            ..Default::default()
        };
        let (_, log) = generate_synthetic_trace(&params).unwrap();
        let assigned = assign_requests_to_cells(&log, 1, 7).unwrap();
        assert!(assigned.requests.iter().all(|r| r.cell == Some(0)));
    }

    #[test]
    fn assign_is_deterministic_and_preserves_order() {
        let params = SyntheticTraceParams {
            num_contents: 20,
            num_requests: 1000,
            ..Default::default()
        };
        let (_, log) = generate_synthetic_trace(&params).unwrap();
        let a = assign_requests_to_cells(&log, 16, 42).unwrap();
        let b = assign_requests_to_cells(&log, 16, 42).unwrap();
        assert_eq!(a, b);
        for (orig, got) in log.requests.iter().zip(&a.requests) {
            assert_eq!(orig.arrival, got.arrival);
            assert_eq!(orig.content, got.content);
        }
    }

    #[test]
    fn assign_rejects_double_assignment() {
        let params = SyntheticTraceParams {
            num_contents: 5,
            num_requests: 10,
            ..Default::default()
        };
        let (_, log) = generate_synthetic_trace(&params).unwrap();
        let assigned = assign_requests_to_cells(&log, 4, 1).unwrap();
        assert!(assign_requests_to_cells(&assigned, 4, 1).is_err());
    }

    #[test]
    fn assign_binomial_concentration() {
        // Each of 16 cells should receive D/16 within a 5-sigma band.
        let d = 100_000usize;
        let params = SyntheticTraceParams {
            num_contents: 100,
            num_requests: d,
            ..Default::default()
        };
        let (_, log) = generate_synthetic_trace(&params).unwrap();
        let assigned = assign_requests_to_cells(&log, 16, 3).unwrap();
        let mut counts = [0usize; 16];
        for r in &assigned.requests {
            counts[r.cell.unwrap()] += 1;
        }
        let mean = d as f64 / 16.0;
        let sigma = (d as f64 * (1.0 / 16.0) * (15.0 / 16.0)).sqrt();
        for (cell, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - mean).abs() <= 5.0 * sigma,
                "cell {cell}: {c} vs {mean} +- {}",
                5.0 * sigma
            );
        }
        assert_eq!(counts.iter().sum::<usize>(), d);
    }

    #[test]
    fn stats_single_request_full_density() {
        let out = parse("0,/a,10\n").unwrap();
        let assigned = assign_requests_to_cells(&out.log, 1, 0).unwrap();
        let stats = trace_stats(&out.catalog, &assigned, 1, out.skipped_rows).unwrap();
        assert_eq!(stats.rating_density, 1.0);
        assert_eq!(stats.total_requested_bytes, 10);
    }

    #[test]
    fn stats_partial_density() {
        // 4 requests, all for content 0 at cell 0; F=2, N=2 -> density 1/4.
        let out = parse("0,/a,10\n1,/a,10\n2,/a,10\n3,/a,10\n9,/b,5\n").unwrap();
        let mut log = out.log.clone();
        log.requests.truncate(4);
        for r in &mut log.requests {
            r.cell = Some(0);
        }
        let stats = trace_stats(&out.catalog, &log, 2, 0).unwrap();
        assert_eq!(stats.rating_density, 0.25);
    }

    #[test]
    fn stats_requires_assignment() {
        let out = parse("0,/a,10\n").unwrap();
        assert!(trace_stats(&out.catalog, &out.log, 1, 0).is_err());
    }
}
