//! Lenient extraction of answer objects from model replies.
//!
//! Replies often wrap a JSON object in prose, or use Python-style single
//! quotes. Objects are parsed with a small tolerant reader: keys and string
//! values may use either quote style, and a single quote only closes a
//! string when followed by `,` `:` `}` `]` or the end of input, so
//! apostrophes inside words survive.

/// Value of `key` (case-insensitive) in the last parseable `{...}` object of
/// `text` that has it as a top-level key. String values are returned
/// unquoted, other values as written.
pub fn extract_json_value(text: &str, key: &str) -> Option<String> {
    let starts: Vec<usize> = text.match_indices('{').map(|(i, _)| i).collect();
    for &start in starts.iter().rev() {
        let mut reader = Reader {
            src: text,
            pos: start,
        };
        if let Some(fields) = reader.object() {
            if let Some((_, v)) = fields.into_iter().rev().find(|(k, _)| k.trim().eq_ignore_ascii_case(key)) {
                return Some(v);
            }
        }
    }
    None
}

struct Reader<'a> {
    src: &'a str,
    pos: usize,
}

impl Reader<'_> {
    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn object(&mut self) -> Option<Vec<(String, String)>> {
        if !self.eat('{') {
            return None;
        }
        let mut fields = Vec::new();
        if self.eat('}') {
            return Some(fields);
        }
        loop {
            self.skip_ws();
            let key = self.string()?;
            if !self.eat(':') {
                return None;
            }
            let value = self.value()?;
            fields.push((key, value));
            if self.eat('}') {
                return Some(fields);
            }
            if !self.eat(',') {
                return None;
            }
            // Trailing comma.
            if self.eat('}') {
                return Some(fields);
            }
        }
    }

    fn value(&mut self) -> Option<String> {
        self.skip_ws();
        match self.peek()? {
            '"' | '\'' => self.string(),
            '{' => {
                let start = self.pos;
                self.object()?;
                Some(self.src[start..self.pos].to_string())
            }
            '[' => {
                let start = self.pos;
                self.array()?;
                Some(self.src[start..self.pos].to_string())
            }
            _ => {
                let start = self.pos;
                while self.peek().is_some_and(|c| !matches!(c, ',' | '}' | ']')) {
                    self.bump();
                }
                let raw = self.src[start..self.pos].trim();
                (!raw.is_empty()).then(|| raw.to_string())
            }
        }
    }

    fn array(&mut self) -> Option<()> {
        if !self.eat('[') {
            return None;
        }
        if self.eat(']') {
            return Some(());
        }
        loop {
            self.value()?;
            if self.eat(']') {
                return Some(());
            }
            if !self.eat(',') {
                return None;
            }
        }
    }

    fn string(&mut self) -> Option<String> {
        let quote = self.bump().filter(|c| *c == '"' || *c == '\'')?;
        let mut out = String::new();
        loop {
            let c = self.bump()?;
            match c {
                '\\' => {
                    let e = self.bump()?;
                    out.push(match e {
                        'n' => '\n',
                        't' => '\t',
                        'r' => '\r',
                        other => other,
                    });
                }
                c if c == quote => {
                    if quote == '"' {
                        return Some(out);
                    }
                    let next = self.rest().trim_start().chars().next();
                    if matches!(next, None | Some(',' | ':' | '}' | ']')) {
                        return Some(out);
                    }
                    out.push(c);
                }
                c => out.push(c),
            }
        }
    }
}
