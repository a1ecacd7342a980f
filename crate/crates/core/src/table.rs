//! Plain-text tables with aligned columns.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Align {
    Left,
    Right,
}

#[derive(Debug, Clone)]
enum Line {
    Cells(Vec<String>),
    Rule,
}

/// Column headers (optionally grouped under spanning labels), rows and
/// horizontal rules. Rendering pads every column to its widest cell.
#[derive(Debug, Clone)]
pub struct TextTable {
    title: Option<String>,
    groups: Vec<(String, usize)>,
    header: Vec<String>,
    align: Vec<Align>,
    lines: Vec<Line>,
    notes: Vec<String>,
}

impl TextTable {
    /// First column left-aligned, the rest right-aligned.
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        let header: Vec<String> = header.into_iter().map(Into::into).collect();
        let align = (0..header.len())
            .map(|i| if i == 0 { Align::Left } else { Align::Right })
            .collect();
        Self {
            title: None,
            groups: Vec::new(),
            header,
            align,
            lines: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn title(mut self, title: impl Into<String>) -> Self {
        self.title = Some(title.into());
        self
    }

    pub fn align(mut self, column: usize, align: Align) -> Self {
        self.align[column] = align;
        self
    }

    /// Spanning labels over consecutive columns; spans must add up to the
    /// column count.
    pub fn groups<S: Into<String>>(mut self, groups: impl IntoIterator<Item = (S, usize)>) -> Self {
        self.groups = groups.into_iter().map(|(s, n)| (s.into(), n)).collect();
        debug_assert_eq!(self.groups.iter().map(|g| g.1).sum::<usize>(), self.header.len());
        self
    }

    pub fn row<S: Into<String>>(&mut self, cells: impl IntoIterator<Item = S>) {
        let cells: Vec<String> = cells.into_iter().map(Into::into).collect();
        debug_assert_eq!(cells.len(), self.header.len());
        self.lines.push(Line::Cells(cells));
    }

    pub fn rule(&mut self) {
        self.lines.push(Line::Rule);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn render(&self) -> String {
        const GAP: usize = 2;
        let n = self.header.len();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for line in &self.lines {
            if let Line::Cells(cells) = line {
                for (w, c) in widths.iter_mut().zip(cells) {
                    *w = (*w).max(c.chars().count());
                }
            }
        }
        // Widen the last column of a group whose label does not fit.
        let mut start = 0;
        for (label, span) in &self.groups {
            let inner: usize = widths[start..start + span].iter().sum::<usize>() + GAP * (span - 1);
            let need = label.chars().count();
            if need > inner {
                widths[start + span - 1] += need - inner;
            }
            start += span;
        }
        let total = widths.iter().sum::<usize>() + GAP * (n - 1);
        let rule = "-".repeat(total);

        let mut out = String::new();
        if let Some(title) = &self.title {
            out.push_str(title);
            out.push('\n');
        }
        out.push_str(&rule);
        out.push('\n');
        if !self.groups.is_empty() {
            let mut parts = Vec::new();
            let mut start = 0;
            for (label, span) in &self.groups {
                let inner = widths[start..start + span].iter().sum::<usize>() + GAP * (span - 1);
                parts.push(format!("{label:^inner$}"));
                start += span;
            }
            out.push_str(parts.join(&" ".repeat(GAP)).trim_end());
            out.push('\n');
        }
        out.push_str(&self.format_cells(&self.header, &widths, GAP));
        out.push_str(&rule);
        out.push('\n');
        for line in &self.lines {
            match line {
                Line::Cells(cells) => out.push_str(&self.format_cells(cells, &widths, GAP)),
                Line::Rule => {
                    out.push_str(&rule);
                    out.push('\n');
                }
            }
        }
        out.push_str(&rule);
        out.push('\n');
        for note in &self.notes {
            out.push_str(note);
            out.push('\n');
        }
        out
    }

    fn format_cells(&self, cells: &[String], widths: &[usize], gap: usize) -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths)
            .zip(&self.align)
            .map(|((c, &w), a)| match a {
                Align::Left => format!("{c:<w$}"),
                Align::Right => format!("{c:>w$}"),
            })
            .collect();
        let mut line = parts.join(&" ".repeat(gap)).trim_end().to_string();
        line.push('\n');
        line
    }
}

/// Fixed decimals without a negative zero.
pub fn fixed(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// `.879`, `<.001`, `1.000`.
pub fn p_value(p: f64) -> String {
    if p.is_nan() {
        return "NA".into();
    }
    if p < 0.001 {
        return "<.001".into();
    }
    let s = format!("{p:.3}");
    match s.strip_prefix('0') {
        Some(rest) => rest.to_string(),
        None => s,
    }
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

pub const DASH: &str = "---";
pub const NA: &str = "NA";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        assert_eq!(fixed(-0.0004, 3), "0.000");
        assert_eq!(fixed(-0.974, 3), "-0.974");
        assert_eq!(p_value(0.8791), ".879");
        assert_eq!(p_value(0.0004), "<.001");
        assert_eq!(p_value(0.9999), "1.000");
        assert_eq!(stars(0.0005), "***");
        assert_eq!(stars(0.005), "**");
        assert_eq!(stars(0.2), "");
    }

    #[test]
    fn columns_align() {
        let mut t = TextTable::new(["Item", "Value"]);
        t.row(["RT1", "1.5"]);
        t.row(["RT10", "-12.25"]);
        let text = t.render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "Item   Value");
        assert_eq!(lines[3], "RT1      1.5");
        assert_eq!(lines[4], "RT10  -12.25");
    }

    #[test]
    fn group_labels_span_columns() {
        let t = TextTable::new(["", "Bias", "RMSE"]).groups([("", 1), ("a long label", 2)]);
        let text = t.render();
        assert!(text.lines().nth(1).unwrap().contains("a long label"));
        let widths: Vec<usize> = text.lines().map(|l| l.len()).collect();
        assert!(widths[0] >= "a long label".len());
    }
}
