//! Maps a JSON path to the line it starts on, for diagnostics on values that
//! parsed fine but failed validation.

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Seg<'a> {
    Key(&'a str),
    Index(usize),
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Scanner<'a> {
    fn skip_ws(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            match b {
                b'\n' => self.line += 1,
                b' ' | b'\t' | b'\r' => {}
                _ => break,
            }
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn string(&mut self) -> Option<String> {
        if self.peek()? != b'"' {
            return None;
        }
        self.pos += 1;
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            match b {
                b'\\' => self.pos += 2,
                b'"' => {
                    let s = String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned();
                    self.pos += 1;
                    return Some(s);
                }
                b'\n' => {
                    self.line += 1;
                    self.pos += 1;
                }
                _ => self.pos += 1,
            }
        }
        None
    }

    fn skip_value(&mut self) -> Option<()> {
        match self.peek()? {
            b'"' => self.string().map(|_| ()),
            b'{' => {
                self.pos += 1;
                if self.peek()? == b'}' {
                    self.pos += 1;
                    return Some(());
                }
                loop {
                    self.string()?;
                    if self.peek()? != b':' {
                        return None;
                    }
                    self.pos += 1;
                    self.skip_value()?;
                    match self.peek()? {
                        b',' => self.pos += 1,
                        b'}' => {
                            self.pos += 1;
                            return Some(());
                        }
                        _ => return None,
                    }
                }
            }
            b'[' => {
                self.pos += 1;
                if self.peek()? == b']' {
                    self.pos += 1;
                    return Some(());
                }
                loop {
                    self.skip_value()?;
                    match self.peek()? {
                        b',' => self.pos += 1,
                        b']' => {
                            self.pos += 1;
                            return Some(());
                        }
                        _ => return None,
                    }
                }
            }
            _ => {
                while let Some(&b) = self.bytes.get(self.pos) {
                    if matches!(b, b',' | b'}' | b']') || b.is_ascii_whitespace() {
                        break;
                    }
                    self.pos += 1;
                }
                Some(())
            }
        }
    }

    /// Descend into the value at the cursor following `path`.
    fn find(&mut self, path: &[Seg]) -> Option<usize> {
        let Some((first, rest)) = path.split_first() else {
            self.peek();
            return Some(self.line);
        };
        match (*first, self.peek()?) {
            (Seg::Key(key), b'{') => {
                self.pos += 1;
                loop {
                    if self.peek()? == b'}' {
                        return None;
                    }
                    let k = self.string()?;
                    if self.peek()? != b':' {
                        return None;
                    }
                    self.pos += 1;
                    if k == key {
                        return self.find(rest);
                    }
                    self.skip_value()?;
                    if self.peek()? == b',' {
                        self.pos += 1;
                    }
                }
            }
            (Seg::Index(idx), b'[') => {
                self.pos += 1;
                for _ in 0..idx {
                    self.skip_value()?;
                    if self.peek()? != b',' {
                        return None;
                    }
                    self.pos += 1;
                }
                self.find(rest)
            }
            _ => None,
        }
    }
}

/// One-based line of the value at `path`; falls back to line 1.
pub fn line_of(text: &str, path: &[Seg]) -> usize {
    let mut s = Scanner {
        bytes: text.as_bytes(),
        pos: 0,
        line: 1,
    };
    s.find(path).unwrap_or(1)
}

pub fn path_string(path: &[Seg]) -> String {
    let mut out = String::new();
    for seg in path {
        match seg {
            Seg::Key(k) => {
                if !out.is_empty() {
                    out.push('.');
                }
                out.push_str(k);
            }
            Seg::Index(i) => out.push_str(&format!("[{i}]")),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_nested_values() {
        let text = "{\n  \"name\": \"a\",\n  \"obstacles\": [\n    {\"min\": [0,0,0]},\n    {\"min\": [1,1,1],\n     \"max\": [2,2,2]}\n  ]\n}";
        assert_eq!(line_of(text, &[Seg::Key("name")]), 2);
        assert_eq!(line_of(text, &[Seg::Key("obstacles"), Seg::Index(1)]), 5);
        assert_eq!(line_of(text, &[Seg::Key("obstacles"), Seg::Index(1), Seg::Key("max")]), 6);
        assert_eq!(line_of(text, &[Seg::Key("missing")]), 1);
        assert_eq!(path_string(&[Seg::Key("obstacles"), Seg::Index(1), Seg::Key("max")]), "obstacles[1].max");
    }
}
