export function submitComment(form, postId) {
  const body = new FormData(form);
  return fetch(`/api/posts/${postId}/comments`, { method: "POST", body });
}
