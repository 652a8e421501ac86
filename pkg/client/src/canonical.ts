/**
 * Canonical JSON encoding of the sraf/1 wire protocol: sorted ASCII keys,
 * no whitespace, lowercase \uXXXX escapes for non-ASCII, and numbers
 * rendered exactly as ECMAScript String(x) renders the double (which is the
 * native behaviour here). Re-encoding a decoded harness line must reproduce
 * its bytes.
 */

export function canonicalNumber(x: number): string {
  if (!Number.isFinite(x)) {
    throw new Error(`non-finite number ${x} cannot be encoded`);
  }
  if (Object.is(x, -0)) {
    return "0";
  }
  return String(x);
}

function escapeString(s: string): string {
  let out = '"';
  for (const ch of s) {
    if (ch === '"') {
      out += '\\"';
    } else if (ch === "\\") {
      out += "\\\\";
    } else if (ch === "\b") {
      out += "\\b";
    } else if (ch === "\f") {
      out += "\\f";
    } else if (ch === "\n") {
      out += "\\n";
    } else if (ch === "\r") {
      out += "\\r";
    } else if (ch === "\t") {
      out += "\\t";
    } else {
      const cp = ch.codePointAt(0)!;
      if (cp >= 0x20 && cp < 0x7f) {
        out += ch;
      } else {
        // UTF-16 code units, surrogate pairs for astral code points
        for (let i = 0; i < ch.length; i++) {
          out += "\\u" + ch.charCodeAt(i).toString(16).padStart(4, "0");
        }
      }
    }
  }
  return out + '"';
}

export function canonicalStringify(value: unknown): string {
  if (value === null) {
    return "null";
  }
  switch (typeof value) {
    case "boolean":
      return value ? "true" : "false";
    case "number":
      return canonicalNumber(value);
    case "string":
      return escapeString(value);
    case "object":
      break;
    default:
      throw new Error(`cannot canonically encode a ${typeof value}`);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalStringify).join(",") + "]";
  }
  const obj = value as Record<string, unknown>;
  const parts = Object.keys(obj)
    .sort()
    .map((k) => escapeString(k) + ":" + canonicalStringify(obj[k]));
  return "{" + parts.join(",") + "}";
}

export function canonicalLine(value: unknown): string {
  return canonicalStringify(value) + "\n";
}
