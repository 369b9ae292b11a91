//! Tokenizer for the `.dartwin` textual form.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpan {
    pub file: String,
    /// 1-based line.
    pub line: u32,
    /// 1-based column, in characters.
    pub column: u32,
    /// Token length in characters.
    pub length: u32,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Str(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Colon,
    Dot,
    Arrow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: SourceSpan,
}

impl Token {
    pub fn describe(&self) -> String {
        match &self.kind {
            TokenKind::Ident(s) => format!("`{s}`"),
            TokenKind::Str(s) => format!("string \"{s}\""),
            TokenKind::LBrace => "`{`".into(),
            TokenKind::RBrace => "`}`".into(),
            TokenKind::LBracket => "`[`".into(),
            TokenKind::RBracket => "`]`".into(),
            TokenKind::Colon => "`:`".into(),
            TokenKind::Dot => "`.`".into(),
            TokenKind::Arrow => "`->`".into(),
        }
    }
}

#[derive(Debug)]
pub struct LexError {
    pub message: String,
    pub span: SourceSpan,
}

pub fn lex(text: &str, file: &str) -> Result<Vec<Token>, LexError> {
    let mut tokens = Vec::new();
    let mut line: u32 = 1;
    let mut column: u32 = 1;
    let mut chars = text.chars().peekable();

    let span = |line: u32, column: u32, length: u32| SourceSpan {
        file: file.to_string(),
        line,
        column,
        length,
    };

    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                chars.next();
                line += 1;
                column = 1;
            }
            ' ' | '\t' | '\r' => {
                chars.next();
                column += 1;
            }
            '/' => {
                let start = span(line, column, 1);
                chars.next();
                column += 1;
                if chars.peek() == Some(&'/') {
                    while let Some(&c) = chars.peek() {
                        if c == '\n' {
                            break;
                        }
                        chars.next();
                        column += 1;
                    }
                } else {
                    return Err(LexError { message: "expected `//` comment".into(), span: start });
                }
            }
            '"' => {
                let (start_line, start_col) = (line, column);
                chars.next();
                column += 1;
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some('"') => {
                            column += 1;
                            break;
                        }
                        Some('\n') | None => {
                            return Err(LexError {
                                message: "unterminated string literal".into(),
                                span: span(start_line, start_col, 1 + s.chars().count() as u32),
                            });
                        }
                        Some(c) => {
                            s.push(c);
                            column += 1;
                        }
                    }
                }
                let len = s.chars().count() as u32 + 2;
                tokens.push(Token { kind: TokenKind::Str(s), span: span(start_line, start_col, len) });
            }
            '{' | '}' | '[' | ']' | ':' | '.' => {
                let kind = match c {
                    '{' => TokenKind::LBrace,
                    '}' => TokenKind::RBrace,
                    '[' => TokenKind::LBracket,
                    ']' => TokenKind::RBracket,
                    ':' => TokenKind::Colon,
                    _ => TokenKind::Dot,
                };
                tokens.push(Token { kind, span: span(line, column, 1) });
                chars.next();
                column += 1;
            }
            '-' => {
                let start = span(line, column, 2);
                chars.next();
                column += 1;
                if chars.peek() == Some(&'>') {
                    chars.next();
                    column += 1;
                    tokens.push(Token { kind: TokenKind::Arrow, span: start });
                } else {
                    return Err(LexError { message: "expected `->`".into(), span: start });
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let (start_line, start_col) = (line, column);
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        chars.next();
                        column += 1;
                    } else {
                        break;
                    }
                }
                let len = s.chars().count() as u32;
                tokens.push(Token {
                    kind: TokenKind::Ident(s),
                    span: span(start_line, start_col, len),
                });
            }
            other => {
                return Err(LexError {
                    message: format!("unexpected character `{other}`"),
                    span: span(line, column, 1),
                });
            }
        }
    }
    Ok(tokens)
}
