//! ZRFA/ZRLA container I/O.
//!
//! Layout: magic (4 bytes), version (u32 LE = 1), entry count (u32 LE),
//! then one index record per entry (u16 LE id length, UTF-8 id, u32 LE rows,
//! u32 LE cols, u64 LE payload offset), then the payload: the entries'
//! row-major matrices concatenated in index order. Offsets are relative to
//! the start of the payload section. Feature payloads are f32 LE (magic
//! `ZRFA`), label payloads i32 LE with cols = 1 (magic `ZRLA`).

use super::{CorpusError, CorpusResult, FeatureArchive, LabelArchive};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use std::io::{Read, Write};

const FEATURE_MAGIC: [u8; 4] = *b"ZRFA";
const LABEL_MAGIC: [u8; 4] = *b"ZRLA";
const VERSION: u32 = 1;

struct IndexRecord {
    id: String,
    rows: u32,
    cols: u32,
    offset: u64,
}

fn write_header<W: Write>(
    sink: &mut W,
    magic: &[u8; 4],
    index: &[IndexRecord],
) -> CorpusResult<u64> {
    sink.write_all(magic)?;
    sink.write_u32::<LittleEndian>(VERSION)?;
    sink.write_u32::<LittleEndian>(index.len() as u32)?;
    let mut written = 12u64;
    for rec in index {
        let id_bytes = rec.id.as_bytes();
        sink.write_u16::<LittleEndian>(id_bytes.len() as u16)?;
        sink.write_all(id_bytes)?;
        sink.write_u32::<LittleEndian>(rec.rows)?;
        sink.write_u32::<LittleEndian>(rec.cols)?;
        sink.write_u64::<LittleEndian>(rec.offset)?;
        written += 2 + id_bytes.len() as u64 + 4 + 4 + 8;
    }
    Ok(written)
}

fn read_header<R: Read>(source: &mut R, magic: &[u8; 4]) -> CorpusResult<Vec<IndexRecord>> {
    let mut got = [0u8; 4];
    source
        .read_exact(&mut got)
        .map_err(|_| CorpusError::BadMagic { expected: *magic })?;
    if &got != magic {
        return Err(CorpusError::BadMagic { expected: *magic });
    }
    let version = source
        .read_u32::<LittleEndian>()
        .map_err(|_| CorpusError::Truncated)?;
    if version != VERSION {
        return Err(CorpusError::BadVersion(version));
    }
    let count = source
        .read_u32::<LittleEndian>()
        .map_err(|_| CorpusError::Truncated)?;
    let mut index = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let id_len = source
            .read_u16::<LittleEndian>()
            .map_err(|_| CorpusError::Truncated)?;
        let mut id_bytes = vec![0u8; id_len as usize];
        source
            .read_exact(&mut id_bytes)
            .map_err(|_| CorpusError::Truncated)?;
        let id = String::from_utf8(id_bytes)
            .map_err(|_| CorpusError::IndexMismatch("entry id is not valid UTF-8".into()))?;
        let rows = source
            .read_u32::<LittleEndian>()
            .map_err(|_| CorpusError::Truncated)?;
        let cols = source
            .read_u32::<LittleEndian>()
            .map_err(|_| CorpusError::Truncated)?;
        let offset = source
            .read_u64::<LittleEndian>()
            .map_err(|_| CorpusError::Truncated)?;
        index.push(IndexRecord {
            id,
            rows,
            cols,
            offset,
        });
    }
    // Offsets must describe a contiguous concatenation in index order.
    let mut expected = 0u64;
    for rec in &index {
        if rec.offset != expected {
            return Err(CorpusError::IndexMismatch(format!(
                "entry '{}' declares offset {}, expected {}",
                rec.id, rec.offset, expected
            )));
        }
        expected += rec.rows as u64 * rec.cols as u64 * 4;
    }
    Ok(index)
}

/// Writes a feature archive as a ZRFA stream; returns the byte count.
pub fn write_features<W: Write>(archive: &FeatureArchive, mut sink: W) -> CorpusResult<u64> {
    if archive.is_empty() {
        return Err(CorpusError::EmptyArchive);
    }
    let mut index = Vec::with_capacity(archive.len());
    let mut offset = 0u64;
    for (id, frames) in archive.iter() {
        if frames.ncols() != archive.dim() {
            return Err(CorpusError::DimMismatch {
                id: id.to_string(),
                expected: archive.dim(),
                got: frames.ncols(),
            });
        }
        index.push(IndexRecord {
            id: id.to_string(),
            rows: frames.nrows() as u32,
            cols: frames.ncols() as u32,
            offset,
        });
        offset += frames.len() as u64 * 4;
    }
    let mut written = write_header(&mut sink, &FEATURE_MAGIC, &index)?;
    for (_, frames) in archive.iter() {
        for &v in frames.iter() {
            sink.write_f32::<LittleEndian>(v)?;
        }
        written += frames.len() as u64 * 4;
    }
    Ok(written)
}

/// Reads a ZRFA stream back into a feature archive, preserving entry order.
pub fn read_features<R: Read>(mut source: R) -> CorpusResult<FeatureArchive> {
    let index = read_header(&mut source, &FEATURE_MAGIC)?;
    if index.is_empty() {
        return Err(CorpusError::EmptyArchive);
    }
    let dim = index[0].cols as usize;
    let mut archive = FeatureArchive::new(dim);
    for rec in &index {
        let n = rec.rows as usize * rec.cols as usize;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(
                source
                    .read_f32::<LittleEndian>()
                    .map_err(|_| CorpusError::Truncated)?,
            );
        }
        let frames = Array2::from_shape_vec((rec.rows as usize, rec.cols as usize), values)
            .map_err(|e| CorpusError::IndexMismatch(e.to_string()))?;
        archive.insert(&rec.id, frames)?;
    }
    // Anything left over means the index undercounted the payload.
    let mut probe = [0u8; 1];
    if source.read(&mut probe)? != 0 {
        return Err(CorpusError::IndexMismatch(
            "payload longer than index declares".into(),
        ));
    }
    Ok(archive)
}

/// Writes a label archive as a ZRLA stream; returns the byte count.
pub fn write_labels<W: Write>(archive: &LabelArchive, mut sink: W) -> CorpusResult<u64> {
    if archive.is_empty() {
        return Err(CorpusError::EmptyArchive);
    }
    let mut index = Vec::with_capacity(archive.len());
    let mut offset = 0u64;
    for (id, labels) in archive.iter() {
        index.push(IndexRecord {
            id: id.to_string(),
            rows: labels.len() as u32,
            cols: 1,
            offset,
        });
        offset += labels.len() as u64 * 4;
    }
    let mut written = write_header(&mut sink, &LABEL_MAGIC, &index)?;
    for (_, labels) in archive.iter() {
        for &v in labels {
            sink.write_i32::<LittleEndian>(v)?;
        }
        written += labels.len() as u64 * 4;
    }
    Ok(written)
}

/// Reads a ZRLA stream back into a label archive, preserving entry order.
pub fn read_labels<R: Read>(mut source: R) -> CorpusResult<LabelArchive> {
    let index = read_header(&mut source, &LABEL_MAGIC)?;
    if index.is_empty() {
        return Err(CorpusError::EmptyArchive);
    }
    let mut archive = LabelArchive::new();
    for rec in &index {
        if rec.cols != 1 {
            return Err(CorpusError::IndexMismatch(format!(
                "label entry '{}' has {} columns, expected 1",
                rec.id, rec.cols
            )));
        }
        let mut labels = Vec::with_capacity(rec.rows as usize);
        for _ in 0..rec.rows {
            labels.push(
                source
                    .read_i32::<LittleEndian>()
                    .map_err(|_| CorpusError::Truncated)?,
            );
        }
        archive.insert(&rec.id, labels)?;
    }
    let mut probe = [0u8; 1];
    if source.read(&mut probe)? != 0 {
        return Err(CorpusError::IndexMismatch(
            "payload longer than index declares".into(),
        ));
    }
    Ok(archive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_matrix_round_trip() {
        let mut a = FeatureArchive::new(2);
        a.insert("u1", Array2::zeros((3, 2))).unwrap();
        let mut buf = Vec::new();
        let n = write_features(&a, &mut buf).unwrap();
        assert_eq!(n, buf.len() as u64);
        let back = read_features(buf.as_slice()).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let buf = b"NOPE\x01\x00\x00\x00\x00\x00\x00\x00".to_vec();
        let err = read_features(buf.as_slice());
        assert!(matches!(err, Err(CorpusError::BadMagic { .. })));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut a = FeatureArchive::new(4);
        a.insert("u1", Array2::from_elem((5, 4), 1.5f32)).unwrap();
        let mut buf = Vec::new();
        write_features(&a, &mut buf).unwrap();
        buf.truncate(buf.len() - 7);
        let err = read_features(buf.as_slice());
        assert!(matches!(err, Err(CorpusError::Truncated)));
    }

    #[test]
    fn row_count_mismatch_is_rejected() {
        let mut a = FeatureArchive::new(1);
        a.insert("u1", array![[1.0f32], [2.0], [3.0], [4.0]]).unwrap();
        let mut buf = Vec::new();
        write_features(&a, &mut buf).unwrap();
        // Claim five rows in the index while the payload holds four.
        // Index record starts at byte 12: u16 len, id, rows at 12+2+2.
        let rows_at = 12 + 2 + 2;
        buf[rows_at] = 5;
        let err = read_features(buf.as_slice());
        assert!(matches!(err, Err(CorpusError::Truncated)));
    }

    #[test]
    fn label_round_trip_preserves_order() {
        let mut a = LabelArchive::new();
        a.insert("zz", vec![3, 1, 2]).unwrap();
        a.insert("aa", vec![0, 0]).unwrap();
        let mut buf = Vec::new();
        write_labels(&a, &mut buf).unwrap();
        let back = read_labels(buf.as_slice()).unwrap();
        assert_eq!(a, back);
        let ids: Vec<&str> = back.iter().map(|(id, _)| id).collect();
        assert_eq!(ids, vec!["zz", "aa"]);
    }

    #[test]
    fn writes_are_deterministic() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut a = FeatureArchive::new(6);
        for i in 0..100 {
            let rows = rng.random_range(1..30);
            let m = Array2::from_shape_fn((rows, 6), |_| rng.random::<f32>() * 10.0 - 5.0);
            a.insert(&format!("utt{i:03}"), m).unwrap();
        }
        let mut buf1 = Vec::new();
        let mut buf2 = Vec::new();
        write_features(&a, &mut buf1).unwrap();
        write_features(&a, &mut buf2).unwrap();
        assert_eq!(buf1, buf2);
        assert_eq!(read_features(buf1.as_slice()).unwrap(), a);
    }
}
