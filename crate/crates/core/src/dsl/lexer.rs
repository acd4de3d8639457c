//! Single-line tokenizer. Programs never continue a construct across lines,
//! so the parser lexes each logical line on its own.

use std::str::FromStr;

use rust_decimal::Decimal;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Num(Decimal),
    Pad,
    Punct(&'static str),
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Num(n) => format!("number {n}"),
            Tok::Pad => "'<pad>'".to_string(),
            Tok::Punct(p) => format!("'{p}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub start: u32,
    pub end: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexError {
    pub col: u32,
    pub message: String,
}

const PUNCT: [&str; 16] = [
    "==", "!=", "<=", ">=", "<", ">", "=", "+", "-", "*", "/", "(", ")", "[", "]", ",",
];

/// Tokenize `line` starting at byte offset `offset`. A `#` outside a string
/// ends the line. `<pad>` is recognised only when `allow_pad` is set.
pub fn lex_line(line: &str, offset: usize, allow_pad: bool) -> Result<Vec<Token>, LexError> {
    let bytes = line.as_bytes();
    let mut out = Vec::new();
    let mut i = offset;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b' ' {
            i += 1;
            continue;
        }
        if c == b'\t' {
            return Err(LexError {
                col: i as u32,
                message: "tab character not allowed".into(),
            });
        }
        if c == b'#' {
            break;
        }
        let start = i;
        if c == b'"' || c == b'\'' {
            let (s, next) = lex_string(line, i)?;
            out.push(Token {
                tok: Tok::Str(s),
                start: start as u32,
                end: next as u32,
            });
            i = next;
            continue;
        }
        if c.is_ascii_digit() {
            let mut j = i;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            if j + 1 < bytes.len() && bytes[j] == b'.' && bytes[j + 1].is_ascii_digit() {
                j += 1;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
            }
            let text = &line[i..j];
            let n = Decimal::from_str(text).map_err(|_| LexError {
                col: i as u32,
                message: format!("number out of range: {text}"),
            })?;
            out.push(Token {
                tok: Tok::Num(n.normalize()),
                start: start as u32,
                end: j as u32,
            });
            i = j;
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut j = i;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                j += 1;
            }
            out.push(Token {
                tok: Tok::Ident(line[i..j].to_string()),
                start: start as u32,
                end: j as u32,
            });
            i = j;
            continue;
        }
        if allow_pad && line[i..].starts_with(super::PAD) {
            let j = i + super::PAD.len();
            out.push(Token {
                tok: Tok::Pad,
                start: start as u32,
                end: j as u32,
            });
            i = j;
            continue;
        }
        if c == b':' {
            out.push(Token {
                tok: Tok::Punct(":"),
                start: start as u32,
                end: (i + 1) as u32,
            });
            i += 1;
            continue;
        }
        if let Some(p) = PUNCT.iter().find(|p| line[i..].starts_with(**p)) {
            out.push(Token {
                tok: Tok::Punct(p),
                start: start as u32,
                end: (i + p.len()) as u32,
            });
            i += p.len();
            continue;
        }
        let ch = line[i..].chars().next().unwrap_or('?');
        return Err(LexError {
            col: i as u32,
            message: format!("unknown token '{ch}'"),
        });
    }
    Ok(out)
}

fn lex_string(line: &str, start: usize) -> Result<(String, usize), LexError> {
    let quote = line.as_bytes()[start] as char;
    let mut out = String::new();
    let mut chars = line[start + 1..].char_indices();
    while let Some((off, ch)) = chars.next() {
        match ch {
            c if c == quote => return Ok((out, start + 1 + off + 1)),
            '\\' => match chars.next() {
                Some((_, 'n')) => out.push('\n'),
                Some((_, 't')) => out.push('\t'),
                Some((_, '\\')) => out.push('\\'),
                Some((_, '"')) => out.push('"'),
                Some((_, '\'')) => out.push('\''),
                Some((eoff, other)) => {
                    return Err(LexError {
                        col: (start + 1 + eoff) as u32,
                        message: format!("invalid escape '\\{other}'"),
                    })
                }
                None => break,
            },
            c => out.push(c),
        }
    }
    Err(LexError {
        col: start as u32,
        message: "unterminated string".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        lex_line(s, 0, false)
            .unwrap()
            .into_iter()
            .map(|t| t.tok)
            .collect()
    }

    #[test]
    fn lexes_operators_greedily() {
        assert_eq!(
            toks("a<=b==c"),
            vec![
                Tok::Ident("a".into()),
                Tok::Punct("<="),
                Tok::Ident("b".into()),
                Tok::Punct("=="),
                Tok::Ident("c".into()),
            ]
        );
    }

    #[test]
    fn trailing_comment_is_dropped() {
        assert_eq!(toks("x = 1  # one"), toks("x = 1"));
    }

    #[test]
    fn string_escapes_and_hash_inside_string() {
        assert_eq!(toks(r#""a\"b#c""#), vec![Tok::Str("a\"b#c".into())]);
        assert_eq!(toks("'single'"), vec![Tok::Str("single".into())]);
    }

    #[test]
    fn unterminated_string_is_an_error() {
        let err = lex_line("x = \"abc", 0, false).unwrap_err();
        assert_eq!(err.message, "unterminated string");
        assert_eq!(err.col, 4);
    }

    #[test]
    fn pad_only_in_abstract_mode() {
        assert!(lex_line("<pad>", 0, true).unwrap()[0].tok == Tok::Pad);
        let plain = toks("<pad>");
        assert_eq!(plain[0], Tok::Punct("<"));
    }

    #[test]
    fn decimals_normalize() {
        assert_eq!(toks("1.50"), vec![Tok::Num(Decimal::new(15, 1))]);
        assert!(lex_line("x = $", 0, false).is_err());
    }
}
