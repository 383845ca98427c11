use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::workspace::{CodeRegion, LineRef, Span, Workspace};

/// Gap marker between non-adjacent regions of one file.
pub const GAP_MARKER: &str = "[...]";

/// Code regions currently shown to the model. Regions of one file are kept
/// merged and sorted; files keep the order in which they first appeared.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchScope {
    files: Vec<(String, Vec<CodeRegion>)>,
    generation: u64,
}

impl SearchScope {
    pub fn new(initial: CodeRegion) -> Self {
        let mut scope = Self::default();
        scope.add(initial);
        scope.generation = 0;
        scope
    }

    /// Adds a region, merging it with overlapping or adjacent regions of the
    /// same file. Returns whether any new line became visible; the
    /// generation counter advances only then.
    pub fn add(&mut self, region: CodeRegion) -> bool {
        let pos = match self.files.iter().position(|(f, _)| *f == region.file) {
            Some(p) => p,
            None => {
                self.files.push((region.file.clone(), Vec::new()));
                self.files.len() - 1
            }
        };
        let regions = &mut self.files[pos].1;
        if regions.iter().any(|r| r.span.encloses(&region.span)) {
            return false;
        }
        regions.push(region);
        regions.sort_by_key(|r| (r.span.start, std::cmp::Reverse(r.span.end)));
        let mut merged: Vec<CodeRegion> = Vec::with_capacity(regions.len());
        for r in regions.drain(..) {
            match merged.last_mut() {
                Some(last) if r.span.start <= last.span.end + 1 => {
                    last.span.end = last.span.end.max(r.span.end);
                }
                _ => merged.push(r),
            }
        }
        *regions = merged;
        self.generation += 1;
        true
    }

    pub fn add_all(&mut self, regions: impl IntoIterator<Item = CodeRegion>) -> bool {
        let mut grew = false;
        for r in regions {
            grew |= self.add(r);
        }
        grew
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn regions(&self) -> impl Iterator<Item = &CodeRegion> {
        self.files.iter().flat_map(|(_, rs)| rs.iter())
    }

    pub fn files(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(f, _)| f.as_str())
    }

    pub fn contains(&self, at: &LineRef) -> bool {
        self.contains_line(&at.file, at.line)
    }

    pub fn contains_line(&self, file: &str, line: usize) -> bool {
        self.files
            .iter()
            .filter(|(f, _)| f == file)
            .flat_map(|(_, rs)| rs.iter())
            .any(|r| r.span.contains(line))
    }

    pub fn encloses(&self, file: &str, span: Span) -> bool {
        self.files
            .iter()
            .filter(|(f, _)| f == file)
            .flat_map(|(_, rs)| rs.iter())
            .any(|r| r.span.encloses(&span))
    }

    pub fn line_count(&self) -> usize {
        self.regions().map(|r| r.span.len()).sum()
    }

    pub fn line_refs(&self) -> Vec<LineRef> {
        self.regions()
            .flat_map(|r| r.span.lines().map(|l| LineRef::new(r.file.clone(), l)))
            .collect()
    }

    /// Each file as `File: <path>` followed by a fenced block of its visible
    /// lines, with a gap marker wherever lines are skipped.
    pub fn render(&self, workspace: &Workspace) -> String {
        let mut out = String::new();
        for (file, regions) in &self.files {
            let Some(source) = workspace.file(file) else {
                continue;
            };
            let _ = writeln!(out, "File: {file}");
            let _ = writeln!(out, "```{}", source.language());
            let mut next = 1;
            for r in regions {
                if r.span.start > next {
                    let _ = writeln!(out, "{GAP_MARKER}");
                }
                for line in r.span.lines() {
                    let _ = writeln!(out, "{}", source.line(line).unwrap_or_default());
                }
                next = r.span.end + 1;
            }
            if next <= source.line_count() {
                let _ = writeln!(out, "{GAP_MARKER}");
            }
            out.push_str("```\n\n");
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
        out
    }
}
