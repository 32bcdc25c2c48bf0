const MAX_TAGS = /* spl:val Widgets.maxTags */;

export function renderCloud(el, counts) {
  const top = Object.entries(counts).sort((a, b) => b[1] - a[1]).slice(0, MAX_TAGS);
  el.innerHTML = top.map(([t, n]) => `<span style="font-size:${1 + n / 10}em">${t}</span>`).join(" ");
}
