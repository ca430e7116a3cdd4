// Word-level diff used to highlight where two attribute values disagree.
/** Splits both values on whitespace and marks each token as shared or not
 * using a longest-common-subsequence alignment. Tokens compare
 * case-insensitively so "Proc." still lines up with "proc.". */
export function tokenDiff(a, b) {
    const left = tokenize(a);
    const right = tokenize(b);
    const n = left.length;
    const m = right.length;
    // lcs[i][j] = LCS length of left[i:], right[j:]
    const lcs = Array.from({ length: n + 1 }, () => new Array(m + 1).fill(0));
    for (let i = n - 1; i >= 0; i--) {
        for (let j = m - 1; j >= 0; j--) {
            lcs[i][j] =
                norm(left[i]) === norm(right[j])
                    ? lcs[i + 1][j + 1] + 1
                    : Math.max(lcs[i + 1][j], lcs[i][j + 1]);
        }
    }
    const leftOut = [];
    const rightOut = [];
    let i = 0;
    let j = 0;
    while (i < n && j < m) {
        if (norm(left[i]) === norm(right[j])) {
            leftOut.push({ text: left[i], common: true });
            rightOut.push({ text: right[j], common: true });
            i++;
            j++;
        }
        else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
            leftOut.push({ text: left[i], common: false });
            i++;
        }
        else {
            rightOut.push({ text: right[j], common: false });
            j++;
        }
    }
    for (; i < n; i++)
        leftOut.push({ text: left[i], common: false });
    for (; j < m; j++)
        rightOut.push({ text: right[j], common: false });
    return { left: leftOut, right: rightOut };
}
function tokenize(value) {
    return value.split(/\s+/).filter((t) => t.length > 0);
}
function norm(token) {
    return token.toLowerCase();
}
